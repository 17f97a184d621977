//! Single-agent optimal search over a per-cell cost field.
//!
//! Moving into a cell costs that cell's entry in the [`CostField`]. Both
//! searches break ties on equal keys by `(y, x)` so repeated runs, and runs of
//! the two algorithms against each other, are reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::gridworld::{Cell, GridMap, Path};

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("no path from {start} to {goal}")]
    NoPath { start: Cell, goal: Cell },

    #[error("cost field has {found} entries, map has {expected} cells")]
    FieldSize { expected: usize, found: usize },

    #[error("cost {cost} at {cell} is below the floor of 1")]
    BelowFloor { cell: Cell, cost: f64 },
}

/// Traversal cost of entering each cell. Every passable cell costs at least 1,
/// which keeps the Manhattan heuristic admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct CostField {
    width: usize,
    costs: Vec<f64>,
}

impl CostField {
    pub fn unit(map: &GridMap) -> Self {
        Self { width: map.width(), costs: vec![1.0; map.width() * map.height()] }
    }

    /// Row-major costs for every cell of `map`; entries of blocked cells are ignored.
    pub fn new(map: &GridMap, costs: Vec<f64>) -> Result<Self, SearchError> {
        let expected = map.width() * map.height();
        if costs.len() != expected {
            return Err(SearchError::FieldSize { expected, found: costs.len() });
        }
        for c in map.passable_cells() {
            let cost = costs[map.index(c)];
            if !(cost >= 1.0) || !cost.is_finite() {
                return Err(SearchError::BelowFloor { cell: c, cost });
            }
        }
        Ok(Self { width: map.width(), costs })
    }

    pub fn cost(&self, c: Cell) -> f64 {
        self.costs[c.y * self.width + c.x]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Sum of entry costs over the moves of `path`; waits are free.
    pub fn path_cost(&self, path: &Path) -> f64 {
        path.cells().windows(2).filter(|w| w[0] != w[1]).map(|w| self.cost(w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub path: Path,
    pub cost: f64,
    /// Nodes popped and expanded, the goal included.
    pub expansions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    key: f64,
    g: f64,
    cell: Cell,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed so BinaryHeap pops the smallest (key, y, x).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.cell.y.cmp(&self.cell.y))
            .then_with(|| other.cell.x.cmp(&self.cell.x))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn best_first(
    field: &CostField,
    map: &GridMap,
    start: Cell,
    goal: Cell,
    heuristic: impl Fn(Cell) -> f64,
) -> Result<SearchOutcome, SearchError> {
    let no_path = SearchError::NoPath { start, goal };
    if !map.is_passable(start) || !map.is_passable(goal) {
        return Err(no_path);
    }
    let n = map.width() * map.height();
    let mut best = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<Cell>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut expansions = 0;

    best[map.index(start)] = 0.0;
    heap.push(Entry { key: heuristic(start), g: 0.0, cell: start });

    while let Some(Entry { g, cell, .. }) = heap.pop() {
        let idx = map.index(cell);
        if closed[idx] || g > best[idx] {
            continue;
        }
        closed[idx] = true;
        expansions += 1;
        if cell == goal {
            let mut cells = vec![goal];
            let mut cur = goal;
            while let Some(p) = parent[map.index(cur)] {
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            let path = Path::new(cells).expect("non-empty");
            let cost = field.path_cost(&path);
            return Ok(SearchOutcome { path, cost, expansions });
        }
        for next in map.neighbors(cell) {
            let ni = map.index(next);
            if closed[ni] {
                continue;
            }
            let ng = g + field.cost(next);
            if ng < best[ni] {
                best[ni] = ng;
                parent[ni] = Some(cell);
                heap.push(Entry { key: ng + heuristic(next), g: ng, cell: next });
            }
        }
    }
    Err(no_path)
}

pub fn dijkstra(field: &CostField, map: &GridMap, start: Cell, goal: Cell) -> Result<SearchOutcome, SearchError> {
    best_first(field, map, start, goal, |_| 0.0)
}

/// A* with the Manhattan heuristic, admissible because every cost is at least 1.
pub fn astar(field: &CostField, map: &GridMap, start: Cell, goal: Cell) -> Result<SearchOutcome, SearchError> {
    best_first(field, map, start, goal, |c| c.manhattan(goal) as f64)
}

/// Unit-cost A* returning just the path.
pub fn shortest_path(map: &GridMap, start: Cell, goal: Cell) -> Result<Path, SearchError> {
    astar(&CostField::unit(map), map, start, goal).map(|o| o.path)
}
