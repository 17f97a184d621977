//! Seeded random maps, solvable instances and expert paths.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::gridworld::{AgentTask, Cell, GridMap, Path, Scenario, Terrain};
use crate::planners::shortest_path;

/// A single-agent problem together with its optimal step count.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub map: GridMap,
    pub start: Cell,
    pub goal: Cell,
    pub optimal: usize,
}

/// Blocks each cell independently with probability `density`. Falls back to
/// an open map in the (astronomically unlikely) all-blocked case.
pub fn random_map(width: usize, height: usize, density: f64, rng: &mut impl Rng) -> GridMap {
    let cells: Vec<Terrain> =
        (0..width * height).map(|_| if rng.gen_bool(density) { Terrain::Blocked } else { Terrain::Passable }).collect();
    GridMap::new(width, height, cells).unwrap_or_else(|_| GridMap::open(width, height))
}

/// Unit-cost BFS distances from `from`; `None` marks unreachable or blocked cells.
pub fn bfs_distances(map: &GridMap, from: Cell) -> Vec<Option<usize>> {
    let mut dist = vec![None; map.width() * map.height()];
    if !map.is_passable(from) {
        return dist;
    }
    dist[map.index(from)] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)].unwrap_or(0);
        for n in map.neighbors(c) {
            let slot = &mut dist[map.index(n)];
            if slot.is_none() {
                *slot = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Distinct start and goal in the same connected component, or `None` if
/// `tries` samples all fail.
pub fn random_task(map: &GridMap, rng: &mut impl Rng, tries: usize) -> Option<(Cell, Cell, usize)> {
    let cells: Vec<Cell> = map.passable_cells().collect();
    for _ in 0..tries {
        let s = *cells.choose(rng)?;
        let g = *cells.choose(rng)?;
        if s == g {
            continue;
        }
        if let Some(d) = bfs_distances(map, s)[map.index(g)] {
            return Some((s, g, d));
        }
    }
    None
}

/// Draws maps until one yields a solvable task.
pub fn random_instance(width: usize, height: usize, density: f64, rng: &mut impl Rng) -> Instance {
    loop {
        let map = random_map(width, height, density, rng);
        if let Some((start, goal, optimal)) = random_task(&map, rng, 32) {
            return Instance { map, start, goal, optimal };
        }
    }
}

pub fn random_instances(n: usize, width: usize, height: usize, density: f64, rng: &mut impl Rng) -> Vec<Instance> {
    (0..n).map(|_| random_instance(width, height, density, rng)).collect()
}

/// Scenario with `agents` tasks whose starts are pairwise distinct and whose
/// goals are pairwise distinct, each goal reachable from its start.
pub fn random_scenario(map: &GridMap, agents: usize, rng: &mut impl Rng) -> Option<Scenario> {
    let mut cells: Vec<Cell> = map.passable_cells().collect();
    if cells.len() < agents + 1 {
        return None;
    }
    for _ in 0..64 {
        cells.shuffle(rng);
        let starts = &cells[..agents];
        let mut goals: Vec<Cell> = cells.clone();
        goals.shuffle(rng);
        let mut tasks = Vec::with_capacity(agents);
        let mut used = Vec::new();
        for s in starts {
            let dist = bfs_distances(map, *s);
            let g = goals.iter().find(|g| **g != *s && !used.contains(*g) && dist[map.index(**g)].is_some());
            let Some(g) = g else { break };
            used.push(*g);
            tasks.push(AgentTask { start: *s, goal: *g });
        }
        if tasks.len() == agents {
            return Scenario::new(map, tasks, vec![]).ok();
        }
    }
    None
}

/// Uniformly random choice among the shortest paths' successors at every
/// step, so repeated calls sample different optimal routes.
pub fn random_shortest_path(map: &GridMap, start: Cell, goal: Cell, rng: &mut impl Rng) -> Option<Path> {
    let dist = bfs_distances(map, goal);
    let mut d = dist[map.index(start)]?;
    let mut cur = start;
    let mut cells = vec![start];
    while d > 0 {
        let next: Vec<Cell> = map.neighbors(cur).into_iter().filter(|n| dist[map.index(*n)] == Some(d - 1)).collect();
        cur = *next.choose(rng)?;
        cells.push(cur);
        d -= 1;
    }
    Path::new(cells)
}

/// Deterministic A* expert.
pub fn expert_path(inst: &Instance) -> Path {
    shortest_path(&inst.map, inst.start, inst.goal).expect("instances are solvable by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::validate_path;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn instances_are_solvable_and_seeded() {
        let a = random_instances(30, 8, 8, 0.2, &mut ChaCha8Rng::seed_from_u64(1));
        let b = random_instances(30, 8, 8, 0.2, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        for inst in &a {
            assert_ne!(inst.start, inst.goal);
            assert_eq!(expert_path(inst).steps(), inst.optimal);
        }
    }

    #[test]
    fn random_shortest_paths_are_optimal_and_varied() {
        let map = GridMap::open(6, 6);
        let (s, g) = (Cell::new(0, 0), Cell::new(5, 5));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let paths: Vec<Path> = (0..20).map(|_| random_shortest_path(&map, s, g, &mut rng).unwrap()).collect();
        assert!(paths.iter().all(|p| p.steps() == 10 && validate_path(&map, p, s, g)));
        assert!(paths.iter().any(|p| p != &paths[0]));
    }

    #[test]
    fn scenario_tasks_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let map = random_map(10, 10, 0.2, &mut rng);
        let sc = random_scenario(&map, 6, &mut rng).unwrap();
        for (i, a) in sc.agents.iter().enumerate() {
            for b in &sc.agents[i + 1..] {
                assert!(a.start != b.start && a.goal != b.goal);
            }
        }
    }

    #[test]
    fn unreachable_is_none() {
        let map = GridMap::new(3, 1, vec![Terrain::Passable, Terrain::Blocked, Terrain::Passable]).unwrap();
        assert_eq!(bfs_distances(&map, Cell::new(0, 0)), vec![Some(0), None, None]);
        assert!(random_shortest_path(&map, Cell::new(0, 0), Cell::new(2, 0), &mut ChaCha8Rng::seed_from_u64(0)).is_none());
    }
}
