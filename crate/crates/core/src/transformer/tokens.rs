//! Token vocabularies and the environment/action sequences fed to the planner.

use crate::gridworld::{Action, Cell, GridMap, Path};

use super::TransformerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvToken {
    Free,
    Blocked,
    Start,
    Goal,
    Sep,
}

impl EnvToken {
    pub const VOCAB: usize = 5;

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        [EnvToken::Free, EnvToken::Blocked, EnvToken::Start, EnvToken::Goal, EnvToken::Sep].get(id).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionToken {
    Bos,
    Up,
    Down,
    Left,
    Right,
    Wait,
    Eos,
    Pad,
}

impl ActionToken {
    pub const VOCAB: usize = 8;
    pub const ALL: [ActionToken; 8] = [
        ActionToken::Bos,
        ActionToken::Up,
        ActionToken::Down,
        ActionToken::Left,
        ActionToken::Right,
        ActionToken::Wait,
        ActionToken::Eos,
        ActionToken::Pad,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn action(self) -> Option<Action> {
        match self {
            ActionToken::Up => Some(Action::Up),
            ActionToken::Down => Some(Action::Down),
            ActionToken::Left => Some(Action::Left),
            ActionToken::Right => Some(Action::Right),
            ActionToken::Wait => Some(Action::Wait),
            _ => None,
        }
    }

    pub fn from_action(a: Action) -> Self {
        match a {
            Action::Up => ActionToken::Up,
            Action::Down => ActionToken::Down,
            Action::Left => ActionToken::Left,
            Action::Right => ActionToken::Right,
            Action::Wait => ActionToken::Wait,
        }
    }
}

/// Flattened map (row-major, START/GOAL substituted, then one `Sep`) plus an
/// action sequence. Expert sequences end with `Eos`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub width: usize,
    pub height: usize,
    pub env: Vec<EnvToken>,
    pub actions: Vec<ActionToken>,
}

/// Number of framing tokens appended after the map cells.
pub const ENV_FRAMING: usize = 1;

pub fn tokenize_env(map: &GridMap, start: Cell, goal: Cell) -> TokenSeq {
    let mut env: Vec<EnvToken> = map
        .passable_cells()
        .fold(vec![EnvToken::Blocked; map.width() * map.height()], |mut acc, c| {
            acc[map.index(c)] = EnvToken::Free;
            acc
        });
    env[map.index(start)] = EnvToken::Start;
    env[map.index(goal)] = EnvToken::Goal;
    env.push(EnvToken::Sep);
    TokenSeq { width: map.width(), height: map.height(), env, actions: Vec::new() }
}

impl TokenSeq {
    /// Attaches the actions of `path` followed by `Eos`.
    pub fn with_expert(mut self, path: &Path) -> Result<Self, TransformerError> {
        let actions = path.actions().ok_or(TransformerError::InvalidExpert)?;
        self.actions = actions.into_iter().map(ActionToken::from_action).chain([ActionToken::Eos]).collect();
        Ok(self)
    }

    /// Builds a sequence from raw ids, rejecting ids outside either vocabulary.
    pub fn from_ids(width: usize, height: usize, env: &[usize], actions: &[usize]) -> Result<Self, TransformerError> {
        let env = env
            .iter()
            .map(|&i| EnvToken::from_id(i).ok_or(TransformerError::VocabOverflow { id: i, vocab: EnvToken::VOCAB }))
            .collect::<Result<Vec<_>, _>>()?;
        let actions = actions
            .iter()
            .map(|&i| ActionToken::from_id(i).ok_or(TransformerError::VocabOverflow { id: i, vocab: ActionToken::VOCAB }))
            .collect::<Result<Vec<_>, _>>()?;
        if env.len() != width * height + ENV_FRAMING {
            return Err(TransformerError::EnvLength { expected: width * height + ENV_FRAMING, found: env.len() });
        }
        Ok(Self { width, height, env, actions })
    }

    pub fn env_ids(&self) -> Vec<usize> {
        self.env.iter().map(|t| t.id()).collect()
    }

    fn find(&self, token: EnvToken) -> Option<Cell> {
        self.env[..self.width * self.height]
            .iter()
            .position(|t| *t == token)
            .map(|i| Cell::new(i % self.width, i / self.width))
    }

    pub fn start(&self) -> Option<Cell> {
        self.find(EnvToken::Start)
    }

    pub fn goal(&self) -> Option<Cell> {
        // A start that equals the goal is encoded as Goal.
        self.find(EnvToken::Goal).or_else(|| self.start())
    }

    pub fn is_open(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height && self.env[c.y * self.width + c.x] != EnvToken::Blocked
    }

    /// Agent cell after each decoder input: element `t` is the position after
    /// replaying the first `t` tokens of `actions`. Moves into walls or off the
    /// map leave the agent in place.
    pub fn positions(&self, actions: &[ActionToken]) -> Vec<Cell> {
        let start = self.start().or_else(|| self.goal()).unwrap_or(Cell::new(0, 0));
        let mut cur = start;
        let mut out = Vec::with_capacity(actions.len() + 1);
        out.push(cur);
        for a in actions {
            if let Some(next) = a.action().and_then(|a| cur.step(a)).filter(|n| self.is_open(*n)) {
                cur = next;
            }
            out.push(cur);
        }
        out
    }
}

/// Width of the per-position state features fed to the decoder.
pub const STATE_DIM: usize = 9;

/// Decoder state features for the agent at `pos` on the map encoded by `seq`.
pub fn state_features(seq: &TokenSeq, pos: Cell) -> [f64; STATE_DIM] {
    let goal = seq.goal().unwrap_or(pos);
    agent_features(seq.width, seq.height, |c| seq.is_open(c), pos, goal)
}

/// Signed offset to the goal, normalised position, blocked flags for
/// Up/Down/Left/Right (off-map counts as blocked), and an at-goal flag.
pub fn agent_features(width: usize, height: usize, is_open: impl Fn(Cell) -> bool, pos: Cell, goal: Cell) -> [f64; STATE_DIM] {
    let (w, h) = (width as f64, height as f64);
    let blocked = |a: Action| f64::from(u8::from(!pos.step(a).is_some_and(|n| n.x < width && n.y < height && is_open(n))));
    [
        (goal.x as f64 - pos.x as f64) / w,
        (goal.y as f64 - pos.y as f64) / h,
        pos.x as f64 / w,
        pos.y as f64 / h,
        blocked(Action::Up),
        blocked(Action::Down),
        blocked(Action::Left),
        blocked(Action::Right),
        f64::from(u8::from(pos == goal)),
    ]
}
