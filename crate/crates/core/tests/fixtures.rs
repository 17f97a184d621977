use hpl_core::datagen::bfs_distances;
use hpl_core::fixtures::{fixture_dir, parse_expected_costs, regenerate_fixtures, FIXTURE_SEED};
use hpl_core::gridworld::{parse_map, parse_scenario};

#[test]
fn committed_fixtures_are_current() {
    regenerate_fixtures(FIXTURE_SEED, &fixture_dir()).unwrap();
}

#[test]
fn expected_costs_match_bfs() {
    let dir = fixture_dir();
    let expected = parse_expected_costs(&std::fs::read_to_string(dir.join("expected.txt")).unwrap()).unwrap();
    assert!(!expected.is_empty());
    for e in expected {
        let map = parse_map(&std::fs::read_to_string(dir.join(&e.map)).unwrap()).unwrap();
        let d = bfs_distances(&map, e.start)[map.index(e.goal)].unwrap();
        assert_eq!(d as f64, e.cost, "{}", e.map);
    }
    let wall = parse_map(&std::fs::read_to_string(dir.join("wall_gap.map")).unwrap()).unwrap();
    let scen = parse_scenario(&std::fs::read_to_string(dir.join("wall_gap.scen")).unwrap(), &wall).unwrap();
    assert!(!scen.agents.is_empty());
}
