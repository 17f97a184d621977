pub mod hybrid;
pub mod multi;
pub mod search;

pub use hybrid::{hybrid_plan, replan, Fallback, Models, PipelineConfig, PlanError, PlanResult, Provenance, StageTimings};
pub use multi::{prioritized_multi, wait_count, JointPlan, MultiConfig, MultiError};
pub use search::{astar, dijkstra, shortest_path, CostField, SearchError, SearchOutcome};
