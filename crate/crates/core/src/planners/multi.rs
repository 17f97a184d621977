//! Prioritized multi-agent planning over a space-time reservation table.
//!
//! Agents plan in index order. Each agent first tries its single-agent plan;
//! if that collides with a reservation, it searches in `(cell, time)` space
//! with waits allowed. Once an agent arrives it stays on its goal, so the goal
//! is reserved from the arrival time onward.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::gridworld::{Action, Cell, GridMap, Path, Scenario};

use super::hybrid::{hybrid_plan, Models, PipelineConfig, PlanError};

#[derive(Debug, Error)]
pub enum MultiError {
    #[error("agent {agent} cannot reach its goal under the reservations within {horizon} steps")]
    NoJointPlan { agent: usize, horizon: usize },

    #[error("agent {agent}: {source}")]
    Plan { agent: usize, source: PlanError },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MultiConfig {
    pub pipeline: PipelineConfig,
    /// Time horizon of the space-time search; `None` means `4 * (width + height)`.
    pub horizon: Option<usize>,
}

impl MultiConfig {
    /// Classical single-agent plans with the default horizon.
    pub fn default_classical() -> Self {
        Self { pipeline: PipelineConfig::classical(), horizon: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPlan {
    pub paths: Vec<Path>,
    /// Whether each agent had to leave its single-agent plan.
    pub rerouted: Vec<bool>,
}

impl JointPlan {
    pub fn makespan(&self) -> usize {
        self.paths.iter().map(Path::steps).max().unwrap_or(0)
    }

    pub fn sum_of_costs(&self) -> usize {
        self.paths.iter().map(Path::steps).sum()
    }
}

#[derive(Debug, Default)]
struct Reservations {
    vertex: HashSet<(usize, Cell)>,
    /// `(t, from, to)`: some agent moves `from -> to` between `t` and `t + 1`.
    edge: HashSet<(usize, Cell, Cell)>,
    /// Cell held permanently from the given time.
    parked: HashMap<Cell, usize>,
    /// Latest time each cell is reserved by a moving agent.
    last_use: HashMap<Cell, usize>,
}

impl Reservations {
    fn occupied(&self, t: usize, c: Cell) -> bool {
        self.vertex.contains(&(t, c)) || self.parked.get(&c).is_some_and(|&from| t >= from)
    }

    fn swap(&self, t: usize, from: Cell, to: Cell) -> bool {
        from != to && self.edge.contains(&(t, to, from))
    }

    /// Whether an agent may stop on `c` at time `t` and stay forever.
    fn can_park(&self, t: usize, c: Cell) -> bool {
        !self.parked.contains_key(&c) && self.last_use.get(&c).is_none_or(|&last| last < t)
    }

    fn admits(&self, path: &Path) -> bool {
        let cells = path.cells();
        cells.iter().enumerate().all(|(t, c)| !self.occupied(t, *c))
            && cells.windows(2).enumerate().all(|(t, w)| !self.swap(t, w[0], w[1]))
            && self.can_park(path.steps(), path.end())
    }

    fn reserve(&mut self, path: &Path) {
        let cells = path.cells();
        for (t, c) in cells.iter().enumerate() {
            self.vertex.insert((t, *c));
            let last = self.last_use.entry(*c).or_insert(t);
            *last = (*last).max(t);
        }
        for (t, w) in cells.windows(2).enumerate() {
            self.edge.insert((t, w[0], w[1]));
        }
        self.parked.insert(path.end(), path.steps());
    }
}

fn distances_to(map: &GridMap, goal: Cell) -> Vec<Option<usize>> {
    let mut dist = vec![None; map.width() * map.height()];
    dist[map.index(goal)] = Some(0);
    let mut queue = VecDeque::from([goal]);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)].unwrap_or(0);
        for n in map.neighbors(c) {
            if dist[map.index(n)].is_none() {
                dist[map.index(n)] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Earliest-arrival search over `(cell, time)` respecting `res`. Ties are
/// broken by larger time and then `(y, x)`.
fn space_time_astar(map: &GridMap, start: Cell, goal: Cell, res: &Reservations, horizon: usize) -> Option<Path> {
    let h = distances_to(map, goal);
    let h0 = h[map.index(start)]?;
    if res.occupied(0, start) {
        return None;
    }
    let mut parent: HashMap<(Cell, usize), Cell> = HashMap::new();
    let mut closed: HashSet<(Cell, usize)> = HashSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((h0, Reverse(0usize), start.y, start.x)));

    while let Some(Reverse((_, Reverse(t), y, x))) = heap.pop() {
        let cell = Cell::new(x, y);
        if !closed.insert((cell, t)) {
            continue;
        }
        if cell == goal && res.can_park(t, goal) {
            let mut cells = vec![cell];
            let mut key = (cell, t);
            while let Some(&p) = parent.get(&key) {
                cells.push(p);
                key = (p, key.1 - 1);
            }
            cells.reverse();
            return Path::new(cells);
        }
        if t >= horizon {
            continue;
        }
        let mut next: Vec<Cell> = map.neighbors(cell);
        next.push(cell);
        for n in next {
            let nt = t + 1;
            if closed.contains(&(n, nt)) || res.occupied(nt, n) || res.swap(t, cell, n) {
                continue;
            }
            let Some(hn) = h[map.index(n)] else { continue };
            if nt + hn > horizon {
                continue;
            }
            parent.entry((n, nt)).or_insert(cell);
            heap.push(Reverse((nt + hn, Reverse(nt), n.y, n.x)));
        }
    }
    None
}

/// Plans every agent of `scenario` in index order against the reservations of
/// the agents before it. The result has no vertex or swap conflicts.
pub fn prioritized_multi(map: &GridMap, scenario: &Scenario, models: Models, config: &MultiConfig) -> Result<JointPlan, MultiError> {
    let horizon = config.horizon.unwrap_or(4 * (map.width() + map.height()));
    let mut res = Reservations::default();
    let mut paths = Vec::with_capacity(scenario.len());
    let mut rerouted = Vec::with_capacity(scenario.len());

    for (agent, task) in scenario.agents.iter().enumerate() {
        let solo = hybrid_plan(map, task.start, task.goal, models, &config.pipeline)
            .map_err(|source| MultiError::Plan { agent, source })?
            .path;
        let (path, moved) = if res.admits(&solo) {
            (solo, false)
        } else {
            let p = space_time_astar(map, task.start, task.goal, &res, horizon)
                .ok_or(MultiError::NoJointPlan { agent, horizon })?;
            (p, true)
        };
        res.reserve(&path);
        paths.push(path);
        rerouted.push(moved);
    }
    Ok(JointPlan { paths, rerouted })
}

/// Number of `Wait` actions in `path`.
pub fn wait_count(path: &Path) -> usize {
    path.actions().map_or(0, |a| a.into_iter().filter(|a| *a == Action::Wait).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{simulate_joint, validate_path, AgentTask, Terrain};
    use crate::planners::shortest_path;

    fn scenario(map: &GridMap, tasks: &[((usize, usize), (usize, usize))]) -> Scenario {
        let agents = tasks
            .iter()
            .map(|&((sx, sy), (gx, gy))| AgentTask { start: Cell::new(sx, sy), goal: Cell::new(gx, gy) })
            .collect();
        Scenario::new(map, agents, vec![]).unwrap()
    }

    fn check(map: &GridMap, sc: &Scenario, plan: &JointPlan) {
        assert!(simulate_joint(map, &plan.paths).is_empty());
        for (p, t) in plan.paths.iter().zip(&sc.agents) {
            assert!(validate_path(map, p, t.start, t.goal));
        }
    }

    #[test]
    fn disjoint_corridors_keep_solo_paths() {
        let m = GridMap::open(6, 3);
        let sc = scenario(&m, &[((0, 0), (5, 0)), ((0, 2), (5, 2))]);
        let plan = prioritized_multi(&m, &sc, Models::default(), &MultiConfig::default_classical()).unwrap();
        check(&m, &sc, &plan);
        for (p, t) in plan.paths.iter().zip(&sc.agents) {
            assert_eq!(p.steps(), shortest_path(&m, t.start, t.goal).unwrap().steps());
        }
        assert_eq!(plan.rerouted, vec![false, false]);
    }

    #[test]
    fn head_on_with_pocket() {
        // A 1-high corridor with a pocket above x = 3.
        let mut cells = vec![Terrain::Blocked; 5 * 2];
        for x in 0..5 {
            cells[5 + x] = Terrain::Passable;
        }
        cells[3] = Terrain::Passable;
        let m = GridMap::new(5, 2, cells).unwrap();
        let sc = scenario(&m, &[((0, 1), (4, 1)), ((4, 1), (0, 1))]);
        let plan = prioritized_multi(&m, &sc, Models::default(), &MultiConfig::default_classical()).unwrap();
        check(&m, &sc, &plan);
        let p = &plan.paths[1];
        assert!(wait_count(p) >= 1 || p.steps() > 4);
        assert!(plan.rerouted[1]);
    }

    #[test]
    fn blocked_corridor_without_pocket_fails() {
        let m = GridMap::open(4, 1);
        let sc = scenario(&m, &[((0, 0), (3, 0)), ((3, 0), (0, 0))]);
        let err = prioritized_multi(&m, &sc, Models::default(), &MultiConfig::default_classical()).unwrap_err();
        assert!(matches!(err, MultiError::NoJointPlan { agent: 1, .. }));
    }

    #[test]
    fn later_agent_avoids_parked_goal() {
        // Agent 0 parks in the middle of agent 1's straight route.
        let m = GridMap::open(5, 2);
        let sc = scenario(&m, &[((2, 1), (2, 0)), ((0, 0), (4, 0))]);
        let plan = prioritized_multi(&m, &sc, Models::default(), &MultiConfig::default_classical()).unwrap();
        check(&m, &sc, &plan);
        assert!(!plan.paths[1].cells()[1..].contains(&Cell::new(2, 0)));
    }

    #[test]
    fn goal_reached_only_after_others_leave() {
        // Agent 0 passes through agent 1's goal late; agent 1 must not park there early.
        let m = GridMap::open(6, 1);
        let sc = scenario(&m, &[((0, 0), (5, 0)), ((4, 0), (4, 0))]);
        let r = prioritized_multi(&m, &sc, Models::default(), &MultiConfig::default_classical());
        // Agent 1 sits on (4,0) at t = 0 while agent 0 must pass; no joint plan exists.
        assert!(matches!(r, Err(MultiError::NoJointPlan { agent: 1, .. })));
    }

    #[test]
    fn crowded_open_grid_is_conflict_free() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = crate::datagen::random_map(12, 12, 0.1, &mut rng);
            let Some(sc) = crate::datagen::random_scenario(&m, 8, &mut rng) else { continue };
            match prioritized_multi(&m, &sc, Models::default(), &MultiConfig::default_classical()) {
                Ok(plan) => check(&m, &sc, &plan),
                Err(MultiError::NoJointPlan { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}
