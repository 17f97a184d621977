//! Conflict detection for joint multi-agent plans.

use serde::{Deserialize, Serialize};

use super::{Cell, GridMap, Path};

/// Two agents on the same cell at the same timestep. `agent_i < agent_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VertexConflict {
    pub time: usize,
    pub cell: Cell,
    pub agent_i: usize,
    pub agent_j: usize,
}

/// Agents exchanging cells between `time` and `time + 1`. `agent_i` moves
/// `cell_a -> cell_b`, `agent_j` the reverse; `agent_i < agent_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwapConflict {
    pub time: usize,
    pub cell_a: Cell,
    pub cell_b: Cell,
    pub agent_i: usize,
    pub agent_j: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub vertex_conflicts: Vec<VertexConflict>,
    pub swap_conflicts: Vec<SwapConflict>,
}

impl ConflictReport {
    pub fn is_empty(&self) -> bool {
        self.vertex_conflicts.is_empty() && self.swap_conflicts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.vertex_conflicts.len() + self.swap_conflicts.len()
    }
}

/// Steps all agents forward in lockstep and lists every vertex and swap conflict.
///
/// Agents whose path is shorter than the longest one wait on their final cell.
pub fn simulate_joint(map: &GridMap, paths: &[Path]) -> ConflictReport {
    debug_assert!(paths.iter().all(|p| p.cells().iter().all(|c| map.is_passable(*c))));
    let horizon = paths.iter().map(Path::steps).max().unwrap_or(0);
    let mut report = ConflictReport::default();

    for t in 0..=horizon {
        for i in 0..paths.len() {
            let ci = paths[i].at(t);
            for j in i + 1..paths.len() {
                if paths[j].at(t) == ci {
                    report.vertex_conflicts.push(VertexConflict { time: t, cell: ci, agent_i: i, agent_j: j });
                }
            }
        }
        if t == horizon {
            break;
        }
        for i in 0..paths.len() {
            let (a0, a1) = (paths[i].at(t), paths[i].at(t + 1));
            if a0 == a1 {
                continue;
            }
            for j in i + 1..paths.len() {
                if paths[j].at(t) == a1 && paths[j].at(t + 1) == a0 {
                    report.swap_conflicts.push(SwapConflict { time: t, cell_a: a0, cell_b: a1, agent_i: i, agent_j: j });
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::validate_path;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn p(cells: &[(usize, usize)]) -> Path {
        Path::new(cells.iter().map(|&(x, y)| Cell::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn disjoint_paths() {
        let m = GridMap::open(3, 2);
        let r = simulate_joint(&m, &[p(&[(0, 0), (1, 0), (2, 0)]), p(&[(0, 1), (1, 1), (2, 1)])]);
        assert!(r.is_empty());
    }

    #[test]
    fn vertex_conflict_at_t1() {
        // agent 0: (0,0)->(1,0)->(2,0); agent 1: (1,1)->(1,0)->(1,1)
        let m = GridMap::open(3, 2);
        let r = simulate_joint(&m, &[p(&[(0, 0), (1, 0), (2, 0)]), p(&[(1, 1), (1, 0), (1, 1)])]);
        assert_eq!(
            r.vertex_conflicts,
            vec![VertexConflict { time: 1, cell: Cell::new(1, 0), agent_i: 0, agent_j: 1 }]
        );
        assert!(r.swap_conflicts.is_empty());
    }

    #[test]
    fn swap_conflict_t0() {
        let m = GridMap::open(2, 1);
        let r = simulate_joint(&m, &[p(&[(0, 0), (1, 0)]), p(&[(1, 0), (0, 0)])]);
        assert!(r.vertex_conflicts.is_empty());
        assert_eq!(
            r.swap_conflicts,
            vec![SwapConflict { time: 0, cell_a: Cell::new(0, 0), cell_b: Cell::new(1, 0), agent_i: 0, agent_j: 1 }]
        );
    }

    #[test]
    fn padding_with_wait_at_goal() {
        // agent 0 finishes at (1,0) at t=1 and stays; agent 1 arrives there at t=2.
        let m = GridMap::open(3, 1);
        let r = simulate_joint(&m, &[p(&[(0, 0), (1, 0)]), p(&[(2, 0), (2, 0), (1, 0)])]);
        assert_eq!(r.vertex_conflicts.len(), 1);
        assert_eq!(r.vertex_conflicts[0].time, 2);
    }

    // Normalised view of a report that does not depend on agent numbering.
    fn canonical(r: &ConflictReport, relabel: &[usize]) -> (BTreeSet<(usize, Cell, usize, usize)>, BTreeSet<(usize, usize, Cell, Cell, usize, Cell, Cell)>) {
        let v = r
            .vertex_conflicts
            .iter()
            .map(|c| {
                let (a, b) = (relabel[c.agent_i], relabel[c.agent_j]);
                (c.time, c.cell, a.min(b), a.max(b))
            })
            .collect();
        let s = r
            .swap_conflicts
            .iter()
            .map(|c| {
                let (a, b) = (relabel[c.agent_i], relabel[c.agent_j]);
                if a < b {
                    (c.time, a, c.cell_a, c.cell_b, b, c.cell_b, c.cell_a)
                } else {
                    (c.time, b, c.cell_b, c.cell_a, a, c.cell_a, c.cell_b)
                }
            })
            .collect();
        (v, s)
    }

    fn arb_walk(w: usize, h: usize) -> impl Strategy<Value = Path> {
        (0..w, 0..h, prop::collection::vec(0usize..5, 0..8)).prop_map(move |(x, y, acts)| {
            let mut cur = Cell::new(x, y);
            let mut cells = vec![cur];
            for a in acts {
                let next = cur.step(crate::gridworld::Action::ALL[a]).filter(|c| c.x < w && c.y < h).unwrap_or(cur);
                cells.push(next);
                cur = next;
            }
            Path::new(cells).unwrap()
        })
    }

    proptest! {
        #[test]
        fn permutation_covariant(paths in prop::collection::vec(arb_walk(3, 3), 2..5), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let m = GridMap::open(3, 3);
            let mut perm: Vec<usize> = (0..paths.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            // permuted[k] = paths[perm[k]]
            let permuted: Vec<Path> = perm.iter().map(|&k| paths[k].clone()).collect();
            let identity: Vec<usize> = (0..paths.len()).collect();
            let base = canonical(&simulate_joint(&m, &paths), &identity);
            let moved = canonical(&simulate_joint(&m, &permuted), &perm);
            prop_assert_eq!(base, moved);
        }

        #[test]
        fn valid_single_path_has_no_conflicts(path in arb_walk(4, 4)) {
            let m = GridMap::open(4, 4);
            prop_assert!(validate_path(&m, &path, path.start(), path.end()));
            prop_assert!(simulate_joint(&m, &[path]).is_empty());
        }
    }
}
