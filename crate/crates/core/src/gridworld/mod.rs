//! Grid world model: maps, scenarios, actions, paths and joint-plan conflicts.
//!
//! Maps and scenarios use the movingai text formats (see [`map`] and
//! [`scenario`]). Movement is 4-connected with a `Wait` action; there is no
//! orientation state.

pub mod joint;
pub mod map;
pub mod scenario;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use joint::{simulate_joint, ConflictReport, SwapConflict, VertexConflict};
pub use map::{parse_map, render_map, MapError};
pub use scenario::{parse_scenario, render_scenario, ScenarioError};

/// Contents of a single grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terrain {
    Passable,
    Blocked,
}

/// Column/row coordinate of a cell. `x` indexes columns, `y` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// Cell reached by `action`, or `None` when it would leave the non-negative quadrant.
    pub fn step(self, action: Action) -> Option<Cell> {
        let (dx, dy) = action.delta();
        let x = self.x.checked_add_signed(dx)?;
        let y = self.y.checked_add_signed(dy)?;
        Some(Cell { x, y })
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// One timestep of agent motion. `Up` decreases `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Wait,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Wait];
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Wait => (0, 0),
        }
    }

    /// The action that takes `from` to `to`, if they are equal or 4-adjacent.
    pub fn between(from: Cell, to: Cell) -> Option<Action> {
        Action::ALL.into_iter().find(|a| from.step(*a) == Some(to))
    }

    pub fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
            Action::Wait => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

/// A rectangular map of passable and blocked cells, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Terrain>,
}

impl GridMap {
    /// Builds a map, checking the cell count and that at least one cell is passable.
    pub fn new(width: usize, height: usize, cells: Vec<Terrain>) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::MalformedHeader(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if cells.len() != width * height {
            return Err(MapError::DimensionMismatch {
                expected: width * height,
                found: cells.len(),
            });
        }
        if !cells.contains(&Terrain::Passable) {
            return Err(MapError::NoPassableCell);
        }
        Ok(Self { width, height, cells })
    }

    pub fn open(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![Terrain::Passable; width * height])
            .expect("open map with positive dimensions is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[Terrain] {
        &self.cells
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn index(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn terrain(&self, c: Cell) -> Option<Terrain> {
        self.in_bounds(c).then(|| self.cells[self.index(c)])
    }

    pub fn is_passable(&self, c: Cell) -> bool {
        self.terrain(c) == Some(Terrain::Passable)
    }

    /// Returns a copy with `c` set to `terrain`. Fails if the result has no passable cell.
    pub fn with_terrain(&self, c: Cell, terrain: Terrain) -> Result<Self, MapError> {
        let mut cells = self.cells.clone();
        if let Some(slot) = self.in_bounds(c).then(|| &mut cells[self.index(c)]) {
            *slot = terrain;
        }
        Self::new(self.width, self.height, cells)
    }

    /// Passable cells in row-major order.
    pub fn passable_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cells.len())
            .filter(|&i| self.cells[i] == Terrain::Passable)
            .map(|i| self.cell_at(i))
    }

    pub fn passable_count(&self) -> usize {
        self.cells.iter().filter(|t| **t == Terrain::Passable).count()
    }

    /// Passable 4-neighbours of `c`, ordered Up, Down, Left, Right.
    pub fn neighbors(&self, c: Cell) -> Vec<Cell> {
        Action::MOVES
            .into_iter()
            .filter_map(|a| c.step(a))
            .filter(|n| self.is_passable(*n))
            .collect()
    }
}

/// A single-agent task: where it starts and where it must end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTask {
    pub start: Cell,
    pub goal: Cell,
}

/// Start/goal pairs for a group of agents, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub agents: Vec<AgentTask>,
    /// Per-agent path-cost hint taken from the scenario file, when present.
    pub optimal_hint: Vec<Option<f64>>,
}

impl Scenario {
    /// Builds a scenario after checking every endpoint against `map`.
    pub fn new(map: &GridMap, agents: Vec<AgentTask>, optimal_hint: Vec<Option<f64>>) -> Result<Self, ScenarioError> {
        if agents.is_empty() {
            return Err(ScenarioError::NoAgents);
        }
        for (i, task) in agents.iter().enumerate() {
            for c in [task.start, task.goal] {
                if !map.in_bounds(c) {
                    return Err(ScenarioError::OutOfBounds { agent: i, cell: c });
                }
                if !map.is_passable(c) {
                    return Err(ScenarioError::StartOrGoalBlocked { agent: i, cell: c });
                }
            }
        }
        let mut optimal_hint = optimal_hint;
        optimal_hint.resize(agents.len(), None);
        Ok(Self { agents, optimal_hint })
    }

    pub fn single(map: &GridMap, start: Cell, goal: Cell) -> Result<Self, ScenarioError> {
        Self::new(map, vec![AgentTask { start, goal }], vec![None])
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

/// A timed sequence of cells; index `t` is the agent position at timestep `t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    cells: Vec<Cell>,
}

impl Path {
    /// Wraps a cell sequence. Returns `None` for an empty sequence.
    pub fn new(cells: Vec<Cell>) -> Option<Self> {
        (!cells.is_empty()).then_some(Self { cells })
    }

    pub fn single(c: Cell) -> Self {
        Self { cells: vec![c] }
    }

    /// Replays `actions` from `start` without checking anything but coordinate underflow.
    pub fn from_actions(start: Cell, actions: &[Action]) -> Option<Self> {
        let mut cells = Vec::with_capacity(actions.len() + 1);
        cells.push(start);
        let mut cur = start;
        for a in actions {
            cur = cur.step(*a)?;
            cells.push(cur);
        }
        Some(Self { cells })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn end(&self) -> Cell {
        *self.cells.last().expect("path is non-empty")
    }

    /// Number of timesteps (transitions), including waits.
    pub fn steps(&self) -> usize {
        self.cells.len() - 1
    }

    /// Position at timestep `t`, holding the final cell once the path is exhausted.
    pub fn at(&self, t: usize) -> Cell {
        self.cells.get(t).copied().unwrap_or_else(|| self.end())
    }

    /// Action sequence, or `None` if two consecutive cells are neither equal nor adjacent.
    pub fn actions(&self) -> Option<Vec<Action>> {
        self.cells.windows(2).map(|w| Action::between(w[0], w[1])).collect()
    }

    pub fn moves(&self) -> usize {
        self.cells.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn into_cells(self) -> Vec<Cell> {
        self.cells
    }
}

/// True iff `path` runs from `start` to `goal` over passable cells with unit or wait steps.
pub fn validate_path(map: &GridMap, path: &Path, start: Cell, goal: Cell) -> bool {
    path.start() == start
        && path.end() == goal
        && path.cells().iter().all(|c| map.is_passable(*c))
        && path.cells().windows(2).all(|w| w[0].manhattan(w[1]) <= 1)
}
