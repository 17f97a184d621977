//! The staged single-agent pipeline: graph cost bias, Transformer proposal,
//! GAN candidates, selection, and a classical fallback.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gan::{repair_with, GanContext, GanError, PathGan};
use crate::gcn::{bias_costs, GcnError, GcnModel, GraphEmbedding};
use crate::graph_env::{build_graph, CargoField};
use crate::gridworld::{validate_path, Cell, GridMap, Path, Scenario};
use crate::transformer::{ActionToken, DecodeMode, TransformerError, TransformerModel};

use super::search::{astar, dijkstra, CostField, SearchError};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no path from {start} to {goal}")]
    NoPath { start: Cell, goal: Cell },

    #[error("stage {0} is enabled but no model was supplied")]
    MissingModel(&'static str),

    #[error("endpoint {0} is not a passable cell")]
    BadEndpoint(Cell),

    #[error(transparent)]
    Transformer(#[from] TransformerError),

    #[error(transparent)]
    Gcn(#[from] GcnError),

    #[error(transparent)]
    Gan(#[from] GanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fallback {
    #[default]
    AStar,
    Dijkstra,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub use_transformer: bool,
    pub use_gnn: bool,
    pub use_gan: bool,
    /// Strength of the graph-score cost bias.
    pub lambda: f64,
    /// GAN candidates drawn per query.
    pub candidates: usize,
    pub fallback: Fallback,
    pub decode: DecodeMode,
    /// Seeds the GAN noise; mixed with the endpoints for each query.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            use_transformer: true,
            use_gnn: true,
            use_gan: true,
            lambda: 0.5,
            candidates: 8,
            fallback: Fallback::AStar,
            decode: DecodeMode::Constrained,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Every neural stage off: the result is the fallback search.
    pub fn classical() -> Self {
        Self { use_transformer: false, use_gnn: false, use_gan: false, ..Self::default() }
    }

    pub fn stages(use_transformer: bool, use_gnn: bool, use_gan: bool) -> Self {
        Self { use_transformer, use_gnn, use_gan, ..Self::default() }
    }
}

/// Borrowed models for the enabled stages.
#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub transformer: Option<&'a TransformerModel>,
    pub gcn: Option<&'a GcnModel>,
    pub gan: Option<&'a PathGan>,
    pub cargo: Option<&'a CargoField>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Transformer,
    /// Index into the drawn GAN candidates.
    GanCandidate(usize),
    AStarFallback,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Transformer => "transformer",
            Provenance::GanCandidate(_) => "gan-candidate",
            Provenance::AStarFallback => "astar-fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub gnn: Duration,
    pub transformer: Duration,
    pub gan: Duration,
    pub select: Duration,
    pub fallback: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.gnn + self.transformer + self.gan + self.select + self.fallback
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub path: Path,
    pub provenance: Provenance,
    /// Cost of `path` on the cost field used for this query.
    pub cost: f64,
    pub timings: StageTimings,
}

struct Proposal {
    path: Path,
    score: f64,
    provenance: Provenance,
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let t0 = Instant::now();
    let out = f();
    *slot += t0.elapsed();
    out
}

fn query_seed(seed: u64, start: Cell, goal: Cell) -> u64 {
    [start.x, start.y, goal.x, goal.y]
        .iter()
        .fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, &v| (h ^ v as u64).wrapping_mul(0x0100_0000_01b3).rotate_left(17))
}

/// Runs the enabled stages in order and returns the best candidate, or the
/// fallback search when no stage produced one.
pub fn hybrid_plan(map: &GridMap, start: Cell, goal: Cell, models: Models, config: &PipelineConfig) -> Result<PlanResult, PlanError> {
    for c in [start, goal] {
        if !map.is_passable(c) {
            return Err(PlanError::BadEndpoint(c));
        }
    }
    if config.use_gnn && models.gcn.is_none() {
        return Err(PlanError::MissingModel("gnn"));
    }
    if config.use_transformer && models.transformer.is_none() {
        return Err(PlanError::MissingModel("transformer"));
    }
    if config.use_gan && models.gan.is_none() {
        return Err(PlanError::MissingModel("gan"));
    }

    let mut timings = StageTimings::default();

    // The embedding conditions the GAN whenever a graph model exists; the
    // use_gnn switch only controls the cost bias.
    let mut field = None;
    let mut embedding: Option<GraphEmbedding> = None;
    if let Some(gcn) = models.gcn {
        timed(&mut timings.gnn, || -> Result<(), PlanError> {
            let scenario = Scenario::single(map, start, goal).map_err(|_| PlanError::BadEndpoint(start))?;
            let empty = CargoField::empty();
            let graph = build_graph(map, &scenario, models.cargo.unwrap_or(&empty));
            if config.use_gnn {
                field = Some(bias_costs(map, &gcn.score_nodes(&graph)?, config.lambda));
            }
            if models.gan.is_some() && config.use_gan {
                embedding = Some(gcn.embed(&graph)?);
            }
            Ok(())
        })?;
    }
    let field = field.unwrap_or_else(|| CostField::unit(map));

    let mut proposals = Vec::new();
    let mut tf_tokens = None;
    if let (true, Some(tf)) = (config.use_transformer, models.transformer) {
        if let Some(path) = timed(&mut timings.transformer, || tf.plan_with(map, start, goal, config.decode))? {
            tf_tokens = path.actions().map(|a| {
                a.into_iter().map(ActionToken::from_action).chain([ActionToken::Eos]).collect::<Vec<_>>()
            });
            proposals.push(Proposal { path, score: 0.0, provenance: Provenance::Transformer });
        }
    }

    if let (true, Some(gan)) = (config.use_gan, models.gan) {
        timed(&mut timings.gan, || -> Result<(), PlanError> {
            let mut ctx = GanContext::new(map, start, goal);
            if let Some(e) = &embedding {
                ctx = ctx.with_embedding(e);
            }
            if let (Some(p), Some(tokens)) = (proposals.first_mut(), &tf_tokens) {
                if tokens.len() <= gan.config.max_len {
                    p.score = gan.discriminate(tokens, &ctx)?;
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(query_seed(config.seed, start, goal));
            let set = gan.candidates(&ctx, config.candidates.max(1), &mut rng)?;
            for (i, c) in set.candidates().iter().enumerate() {
                if let Ok(path) = repair_with(&field, map, &c.raw, start, goal) {
                    proposals.push(Proposal { path, score: c.score, provenance: Provenance::GanCandidate(i) });
                }
            }
            Ok(())
        })?;
    }

    let chosen = timed(&mut timings.select, || {
        let mut best: Option<Proposal> = None;
        for p in proposals.into_iter().filter(|p| validate_path(map, &p.path, start, goal)) {
            let better = match &best {
                None => true,
                Some(b) => p.path.steps() < b.path.steps() || (p.path.steps() == b.path.steps() && p.score > b.score),
            };
            if better {
                best = Some(p);
            }
        }
        best
    });

    let (path, provenance) = match chosen {
        Some(p) => (p.path, p.provenance),
        None => {
            let outcome = timed(&mut timings.fallback, || match config.fallback {
                Fallback::AStar => astar(&field, map, start, goal),
                Fallback::Dijkstra => dijkstra(&field, map, start, goal),
            });
            match outcome {
                Ok(o) => (o.path, Provenance::AStarFallback),
                Err(SearchError::NoPath { .. }) => return Err(PlanError::NoPath { start, goal }),
                Err(_) => unreachable!("field is built for this map"),
            }
        }
    };
    let cost = field.path_cost(&path);
    Ok(PlanResult { path, provenance, cost, timings })
}

/// Plans afresh from `current` on the updated map; any earlier plan is dropped.
pub fn replan(map: &GridMap, current: Cell, goal: Cell, models: Models, config: &PipelineConfig) -> Result<PlanResult, PlanError> {
    if !map.is_passable(current) {
        return Err(PlanError::BadEndpoint(current));
    }
    if !map.is_passable(goal) {
        return Err(PlanError::NoPath { start: current, goal });
    }
    hybrid_plan(map, current, goal, models, config)
}
