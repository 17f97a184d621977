//! Hybrid pipeline and multi-agent coordination end to end.

use hpl_core::datagen::{random_instances, random_map, random_scenario};
use hpl_core::gcn::{GcnConfig, GcnModel};
use hpl_core::gridworld::{simulate_joint, validate_path, Cell, GridMap, Path};
use hpl_core::planners::{
    astar, hybrid_plan, prioritized_multi, CostField, Models, MultiConfig, PipelineConfig, Provenance,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn classical_pipeline_is_astar() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for inst in random_instances(30, 10, 10, 0.2, &mut rng) {
        let r = hybrid_plan(&inst.map, inst.start, inst.goal, Models::default(), &PipelineConfig::classical()).unwrap();
        let a = astar(&CostField::unit(&inst.map), &inst.map, inst.start, inst.goal).unwrap();
        assert_eq!(r.provenance, Provenance::AStarFallback);
        assert_eq!(r.cost, a.cost);
        assert_eq!(r.path.steps(), inst.optimal);
    }
}

#[test]
fn gnn_bias_never_breaks_validity() {
    let gcn = GcnModel::new(GcnConfig::default(), 4);
    let models = Models { gcn: Some(&gcn), ..Models::default() };
    let cfg = PipelineConfig { lambda: 3.0, ..PipelineConfig::stages(false, true, false) };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for inst in random_instances(20, 8, 8, 0.25, &mut rng) {
        let r = hybrid_plan(&inst.map, inst.start, inst.goal, models, &cfg).unwrap();
        assert!(validate_path(&inst.map, &r.path, inst.start, inst.goal));
        assert!(r.path.steps() >= inst.optimal);
    }
}

#[test]
fn joint_plans_are_conflict_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for agents in 2..=6 {
        let map = random_map(12, 12, 0.1, &mut rng);
        let Some(sc) = random_scenario(&map, agents, &mut rng) else { continue };
        let plan = prioritized_multi(&map, &sc, Models::default(), &MultiConfig::default_classical()).unwrap();
        assert!(simulate_joint(&map, &plan.paths).is_empty());
        assert_eq!(plan.paths.len(), agents);
    }
}

#[test]
fn simulator_reports_vertex_and_swap_conflicts() {
    let map = GridMap::open(3, 1);
    let a = Path::new(vec![Cell::new(0, 0), Cell::new(1, 0)]).unwrap();
    let b = Path::new(vec![Cell::new(2, 0), Cell::new(1, 0)]).unwrap();
    let r = simulate_joint(&map, &[a, b]);
    assert_eq!(r.vertex_conflicts.len(), 1);
    assert_eq!(r.vertex_conflicts[0].time, 1);

    let a = Path::new(vec![Cell::new(0, 0), Cell::new(1, 0)]).unwrap();
    let b = Path::new(vec![Cell::new(1, 0), Cell::new(0, 0)]).unwrap();
    let r = simulate_joint(&map, &[a, b]);
    assert_eq!(r.swap_conflicts.len(), 1);
}
