//! Conditional sequence GAN that proposes candidate paths.
//!
//! Both networks are single-layer tanh RNNs over the six-symbol alphabet
//! Up/Down/Left/Right/Wait/EOS. The generator reads noise `z`, a condition
//! vector (graph embedding plus normalised start/goal coordinates) and the
//! agent's current local state, and emits one action per step. Generation is
//! argmax given `z`, so all randomness lives in the noise. Candidates are
//! repaired against the map and the shortest survivor is selected.

mod nets;
mod train;

use thiserror::Error;

use crate::gcn::GraphEmbedding;
use crate::gridworld::{Action, Cell, GridMap, Path};
use crate::planners::{astar, CostField};
use crate::tensor::{CheckpointError, TensorError};
use crate::transformer::tokens::{agent_features, STATE_DIM};
use crate::transformer::ActionToken;

pub use nets::{bind_frozen, BnStats, PathGan, SeqBatch};
pub use train::{GanExample, GanLosses, GanTrainer, GeneratorLoss};

/// Generator/discriminator alphabet size: the five actions plus `EOS`.
pub const GAN_ACTIONS: usize = 6;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("noise has {found} entries, expected {expected}")]
    NoiseSize { expected: usize, found: usize },

    #[error("graph embedding has {found} entries, expected {expected}")]
    ConditionSize { expected: usize, found: usize },

    #[error("batch of {found} examples, configured for {expected}")]
    BatchSize { expected: usize, found: usize },

    #[error("expert path with {len} moves does not fit max_len {max_len}")]
    TooLong { len: usize, max_len: usize },

    #[error("candidate set is empty")]
    NoCandidates,

    #[error("every candidate was rejected by repair")]
    AllRejected,

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GenLoss {
    /// Minimise `BCE(D(G(z)), 1)`.
    #[default]
    NonSaturating,
    /// Minimise `log(1 - D(G(z)))` literally.
    Minimax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanConfig {
    pub noise_dim: usize,
    pub batch: usize,
    pub lr: f64,
    pub min_iterations: usize,
    /// Learning rate multiplier applied after every `epoch_len` iterations.
    pub lr_decay: f64,
    pub epoch_len: usize,
    pub hidden: usize,
    pub max_len: usize,
    /// Width of the graph embedding part of the condition.
    pub embed_dim: usize,
    pub batch_norm: bool,
    /// Weight of the teacher-forced cross-entropy added to the generator loss.
    pub supervised_weight: f64,
    pub generator_loss: GenLoss,
    /// Candidates drawn per query.
    pub candidates: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 32,
            batch: 32,
            lr: 1e-3,
            min_iterations: 1800,
            lr_decay: 0.98,
            epoch_len: 100,
            hidden: 64,
            max_len: 32,
            embed_dim: 32,
            batch_norm: false,
            supervised_weight: 1.0,
            generator_loss: GenLoss::NonSaturating,
            candidates: 8,
        }
    }
}

impl GanConfig {
    pub fn cond_dim(&self) -> usize {
        self.embed_dim + 4
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::Config(m));
        if !(10..=100).contains(&self.noise_dim) {
            return bad(format!("noise_dim {} outside [10, 100]", self.noise_dim));
        }
        if self.batch != 32 && self.batch != 64 {
            return bad(format!("batch {} must be 32 or 64", self.batch));
        }
        if [self.hidden, self.max_len, self.epoch_len, self.candidates].contains(&0) {
            return bad("hidden, max_len, epoch_len and candidates must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.supervised_weight < 0.0 {
            return bad("lr must be positive, lr_decay in (0, 1], supervised_weight non-negative".into());
        }
        Ok(())
    }
}

/// One query: the map, endpoints and optional graph embedding.
#[derive(Debug, Clone, Copy)]
pub struct GanContext<'a> {
    pub map: &'a GridMap,
    pub start: Cell,
    pub goal: Cell,
    pub embedding: Option<&'a GraphEmbedding>,
}

impl<'a> GanContext<'a> {
    pub fn new(map: &'a GridMap, start: Cell, goal: Cell) -> Self {
        Self { map, start, goal, embedding: None }
    }

    pub fn with_embedding(mut self, e: &'a GraphEmbedding) -> Self {
        self.embedding = Some(e);
        self
    }

    /// `h_G` (zeros when absent) followed by normalised start and goal coordinates.
    pub fn condition(&self, embed_dim: usize) -> Result<Vec<f64>, GanError> {
        let mut c = match self.embedding {
            Some(e) if e.0.len() != embed_dim => {
                return Err(GanError::ConditionSize { expected: embed_dim, found: e.0.len() })
            }
            Some(e) => e.0.clone(),
            None => vec![0.0; embed_dim],
        };
        let (w, h) = (self.map.width() as f64, self.map.height() as f64);
        c.extend([self.start.x as f64 / w, self.start.y as f64 / h, self.goal.x as f64 / w, self.goal.y as f64 / h]);
        Ok(c)
    }

    fn features(&self, pos: Cell) -> [f64; STATE_DIM] {
        agent_features(self.map.width(), self.map.height(), |c| self.map.is_passable(c), pos, self.goal)
    }

    /// Position after taking class `k`; illegal moves leave the agent in place.
    fn advance(&self, pos: Cell, k: usize) -> Cell {
        class_token(k)
            .action()
            .and_then(|a| pos.step(a))
            .filter(|n| self.map.is_passable(*n))
            .unwrap_or(pos)
    }
}

pub fn class_token(k: usize) -> ActionToken {
    ActionToken::ALL[k + 1]
}

pub fn token_class(t: ActionToken) -> Option<usize> {
    match t {
        ActionToken::Bos | ActionToken::Pad => None,
        t => Some(t.id() - 1),
    }
}

/// Follows `raw` up to `EOS`; `Some` iff every move is legal and the walk ends at `goal`.
pub fn raw_path(map: &GridMap, raw: &[ActionToken], start: Cell, goal: Cell) -> Option<Path> {
    let (prefix, stop) = follow(map, raw, start);
    (stop.is_none() && prefix.last() == Some(&goal)).then(|| Path::new(prefix)).flatten()
}

/// Legal prefix of `raw` and the index of the first illegal token, if any.
fn follow(map: &GridMap, raw: &[ActionToken], start: Cell) -> (Vec<Cell>, Option<usize>) {
    let mut cells = vec![start];
    let mut cur = start;
    for (i, t) in raw.iter().enumerate() {
        if *t == ActionToken::Eos {
            break;
        }
        match t.action().and_then(|a| if a == Action::Wait { Some(cur) } else { cur.step(a) }).filter(|n| map.is_passable(*n)) {
            Some(n) => {
                cur = n;
                cells.push(n);
            }
            None => return (cells, Some(i)),
        }
    }
    (cells, None)
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("goal unreachable after truncating candidate at token {truncated_at}")]
pub struct Rejected {
    pub truncated_at: usize,
}

/// Keeps the legal prefix of `raw` and completes it to `goal` with unit-cost A*.
pub fn repair(map: &GridMap, raw: &[ActionToken], start: Cell, goal: Cell) -> Result<Path, Rejected> {
    repair_with(&CostField::unit(map), map, raw, start, goal)
}

pub fn repair_with(field: &CostField, map: &GridMap, raw: &[ActionToken], start: Cell, goal: Cell) -> Result<Path, Rejected> {
    if !map.is_passable(start) {
        return Err(Rejected { truncated_at: 0 });
    }
    let (mut cells, stop) = follow(map, raw, start);
    let truncated_at = stop.unwrap_or(cells.len() - 1);
    let tail = astar(field, map, *cells.last().unwrap_or(&start), goal).map_err(|_| Rejected { truncated_at })?;
    cells.extend_from_slice(&tail.path.cells()[1..]);
    Path::new(cells).ok_or(Rejected { truncated_at })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub raw: Vec<ActionToken>,
    pub score: f64,
    /// Whether `raw` is already a legal path to the goal without repair.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Candidate>) -> Result<Self, GanError> {
        if candidates.is_empty() {
            return Err(GanError::NoCandidates);
        }
        Ok(Self { candidates })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.candidates.iter().filter(|c| c.valid).count() as f64 / self.candidates.len() as f64
    }
}

/// Repairs every candidate and returns `(index, path)` of the shortest,
/// breaking ties by higher discriminator score and then by lower index.
pub fn select_best(set: &CandidateSet, map: &GridMap, start: Cell, goal: Cell) -> Result<(usize, Path), GanError> {
    select_best_with(set, &CostField::unit(map), map, start, goal)
}

pub fn select_best_with(set: &CandidateSet, field: &CostField, map: &GridMap, start: Cell, goal: Cell) -> Result<(usize, Path), GanError> {
    let mut best: Option<(usize, Path)> = None;
    for (i, c) in set.candidates.iter().enumerate() {
        let Ok(p) = repair_with(field, map, &c.raw, start, goal) else { continue };
        let better = match &best {
            None => true,
            Some((j, q)) => p.steps() < q.steps() || (p.steps() == q.steps() && c.score > set.candidates[*j].score),
        };
        if better {
            best = Some((i, p));
        }
    }
    best.ok_or(GanError::AllRejected)
}
