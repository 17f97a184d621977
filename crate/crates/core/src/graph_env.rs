//! Graph view of a grid world for the GCN.
//!
//! Nodes are the passable cells in row-major order. Edges join 4-adjacent
//! passable cells with weight equal to their centre distance (always 1).
//! Each node carries [`FEATURE_DIM`] features:
//!
//! | column | feature                                   |
//! |--------|-------------------------------------------|
//! | 0      | passable (always 1)                       |
//! | 1      | cargo weight                              |
//! | 2      | 1 if some agent starts here               |
//! | 3      | 1 if some agent's goal is here            |
//! | 4      | x / width                                 |
//! | 5      | y / height                                |

use std::collections::BTreeMap;

use thiserror::Error;

use crate::gridworld::{Cell, GridMap, Scenario};

pub const FEATURE_DIM: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum CargoError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("cargo placed on non-passable cell {0}")]
    NotPassable(Cell),
}

/// Cargo weight per passable cell; unlisted cells carry 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CargoField {
    weights: BTreeMap<Cell, f64>,
}

impl CargoField {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn set(&mut self, map: &GridMap, cell: Cell, weight: f64) -> Result<(), CargoError> {
        if !map.is_passable(cell) {
            return Err(CargoError::NotPassable(cell));
        }
        self.weights.insert(cell, weight.max(0.0));
        Ok(())
    }

    pub fn weight(&self, cell: Cell) -> f64 {
        self.weights.get(&cell).copied().unwrap_or(0.0)
    }

    /// Parses `x y weight` lines (whitespace separated). Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, map: &GridMap) -> Result<Self, CargoError> {
        let mut field = Self::empty();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| CargoError::Malformed { line: i + 1, reason: reason.to_string() };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [x, y, w] = parts.as_slice() else {
                return Err(bad("expected `x y weight`"));
            };
            let x = x.parse::<usize>().map_err(|_| bad("bad x"))?;
            let y = y.parse::<usize>().map_err(|_| bad("bad y"))?;
            let w = w.parse::<f64>().ok().filter(|w| w.is_finite() && *w >= 0.0).ok_or_else(|| bad("bad weight"))?;
            field.set(map, Cell::new(x, y), w)?;
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvGraph {
    pub nodes: Vec<Cell>,
    /// Undirected edges with `i < j`.
    pub edges: Vec<Edge>,
    /// Row-major `N x FEATURE_DIM`.
    pub features: Vec<f64>,
    /// Row-major `N x N` symmetric normalised adjacency with self-loops.
    pub norm_adjacency: Vec<f64>,
    index: BTreeMap<Cell, usize>,
}

impl EnvGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_of(&self, c: Cell) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }
}

pub fn build_graph(map: &GridMap, scenario: &Scenario, cargo: &CargoField) -> EnvGraph {
    let nodes: Vec<Cell> = map.passable_cells().collect();
    let index: BTreeMap<Cell, usize> = nodes.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    let mut edges = Vec::new();
    for (i, c) in nodes.iter().enumerate() {
        for n in map.neighbors(*c) {
            let j = index[&n];
            if i < j {
                edges.push(Edge { i, j, weight: 1.0 });
            }
        }
    }

    let (w, h) = (map.width() as f64, map.height() as f64);
    let mut features = Vec::with_capacity(nodes.len() * FEATURE_DIM);
    for c in &nodes {
        let start = scenario.agents.iter().any(|a| a.start == *c);
        let goal = scenario.agents.iter().any(|a| a.goal == *c);
        features.extend_from_slice(&[
            1.0,
            cargo.weight(*c),
            f64::from(u8::from(start)),
            f64::from(u8::from(goal)),
            c.x as f64 / w,
            c.y as f64 / h,
        ]);
    }

    let mut graph = EnvGraph { nodes, edges, features, norm_adjacency: Vec::new(), index };
    graph.norm_adjacency = normalized_adjacency(&graph);
    graph
}

/// `D^-1/2 (A + I) D^-1/2` with `D` the row sums of `A + I`.
pub fn normalized_adjacency(graph: &EnvGraph) -> Vec<f64> {
    let n = graph.node_count();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for e in &graph.edges {
        a[e.i * n + e.j] += e.weight;
        a[e.j * n + e.i] += e.weight;
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a[i * n..(i + 1) * n].iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{AgentTask, Terrain};
    use rand::{Rng, SeedableRng};

    fn scen(map: &GridMap, s: Cell, g: Cell) -> Scenario {
        Scenario::single(map, s, g).unwrap()
    }

    #[test]
    fn open_two_by_two() {
        let m = GridMap::open(2, 2);
        let g = build_graph(&m, &scen(&m, Cell::new(0, 0), Cell::new(1, 1)), &CargoField::empty());
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edges.len(), 4);
        assert!(g.edges.iter().all(|e| e.weight == 1.0 && e.i < e.j));
    }

    #[test]
    fn single_passable_cell() {
        let m = GridMap::new(2, 1, vec![Terrain::Passable, Terrain::Blocked]).unwrap();
        let g = build_graph(&m, &scen(&m, Cell::new(0, 0), Cell::new(0, 0)), &CargoField::empty());
        assert_eq!(g.node_count(), 1);
        assert!(g.edges.is_empty());
        assert_eq!(g.norm_adjacency, vec![1.0]);
    }

    #[test]
    fn goal_indicator_and_features() {
        let m = GridMap::open(3, 2);
        let mut cargo = CargoField::empty();
        cargo.set(&m, Cell::new(1, 0), 2.5).unwrap();
        let g = build_graph(&m, &scen(&m, Cell::new(0, 0), Cell::new(2, 1)), &cargo);
        for (i, c) in g.nodes.iter().enumerate() {
            let f = g.feature_row(i);
            assert_eq!(f[3], if *c == Cell::new(2, 1) { 1.0 } else { 0.0 });
            assert_eq!(f[2], if *c == Cell::new(0, 0) { 1.0 } else { 0.0 });
            assert_eq!(f[0], 1.0);
        }
        let i = g.node_of(Cell::new(1, 0)).unwrap();
        assert_eq!(g.feature_row(i), &[1.0, 2.5, 0.0, 0.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn two_node_normalisation() {
        let m = GridMap::open(2, 1);
        let g = build_graph(&m, &scen(&m, Cell::new(0, 0), Cell::new(1, 0)), &CargoField::empty());
        assert!(g.norm_adjacency.iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn symmetric_and_spectrally_bounded_on_random_graphs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let cells = (0..25).map(|_| if rng.gen_bool(0.7) { Terrain::Passable } else { Terrain::Blocked }).collect();
            let Ok(m) = GridMap::new(5, 5, cells) else { continue };
            let c = m.passable_cells().next().unwrap();
            let g = build_graph(&m, &scen(&m, c, c), &CargoField::empty());
            let n = g.node_count();
            let a = &g.norm_adjacency;
            for i in 0..n {
                for j in 0..n {
                    assert!((a[i * n + j] - a[j * n + i]).abs() < 1e-12);
                }
            }
            // Power iteration gives the largest |eigenvalue|, which must not exceed 1.
            let spectral_radius = |op: &dyn Fn(&[f64]) -> Vec<f64>| {
                let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
                let mut lambda = 0.0;
                for _ in 0..500 {
                    let w = op(&v);
                    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        return 0.0;
                    }
                    lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v = w.iter().map(|x| x / norm).collect();
                }
                lambda
            };
            let apply = |v: &[f64]| (0..n).map(|i| (0..n).map(|j| a[i * n + j] * v[j]).sum()).collect::<Vec<f64>>();
            assert!(spectral_radius(&apply) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn regular_interior_rows_sum_to_one() {
        // Interior corridor nodes and their neighbours all have degree 2.
        let m = GridMap::open(6, 1);
        let g = build_graph(&m, &scen(&m, Cell::new(0, 0), Cell::new(5, 0)), &CargoField::empty());
        let n = g.node_count();
        for i in 2..n - 2 {
            let s: f64 = g.norm_adjacency[i * n..(i + 1) * n].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn agent_order_only_touches_indicator_columns() {
        let m = GridMap::open(4, 4);
        let a = AgentTask { start: Cell::new(0, 0), goal: Cell::new(3, 3) };
        let b = AgentTask { start: Cell::new(3, 0), goal: Cell::new(0, 3) };
        let s1 = Scenario::new(&m, vec![a, b], vec![]).unwrap();
        let s2 = Scenario::new(&m, vec![b, a], vec![]).unwrap();
        let g1 = build_graph(&m, &s1, &CargoField::empty());
        let g2 = build_graph(&m, &s2, &CargoField::empty());
        assert_eq!(g1, g2);
    }

    #[test]
    fn cargo_file() {
        let m = GridMap::new(2, 1, vec![Terrain::Passable, Terrain::Blocked]).unwrap();
        let f = CargoField::parse("# x y w\n0 0 1.5\n", &m).unwrap();
        assert_eq!(f.weight(Cell::new(0, 0)), 1.5);
        assert_eq!(CargoField::parse("1 0 2\n", &m), Err(CargoError::NotPassable(Cell::new(1, 0))));
        assert!(matches!(CargoField::parse("0 0\n", &m), Err(CargoError::Malformed { line: 1, .. })));
    }
}
