//! Encoder-decoder Transformer that reads a tokenized map and emits actions.
//!
//! The encoder consumes the flattened map (cell tokens plus a separator). The
//! decoder is fed `BOS` followed by the actions so far; each decoder input is
//! the action embedding plus the sinusoidal position plus a learned projection
//! of the agent's state after replaying that prefix (see
//! [`tokens::state_features`]). Layer normalisation follows each residual sum.

mod attention;
mod model;
mod train;
pub mod tokens;

use thiserror::Error;

use crate::tensor::{CheckpointError, TensorError};

pub use attention::{attention_weights, causal_mask, multi_head, positional_encoding, scaled_dot_attention, HeadVars};
pub use model::{DecodeMode, TransformerModel};
pub use train::{train_imitation, ImitationConfig};
pub use tokens::{tokenize_env, ActionToken, EnvToken, TokenSeq};

/// Epsilon inside the layer-norm square root.
pub const LN_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TransformerError {
    #[error("token id {id} outside vocabulary of size {vocab}")]
    VocabOverflow { id: usize, vocab: usize },

    #[error("environment sequence has {found} tokens, expected {expected}")]
    EnvLength { expected: usize, found: usize },

    #[error("action sequence of length {len} exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expert path is not a sequence of unit moves")]
    InvalidExpert,

    #[error("empty batch")]
    EmptyBatch,

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerConfig {
    pub d_model: usize,
    pub heads: usize,
    /// Layer count for the encoder and, separately, the decoder.
    pub layers: usize,
    pub d_ff: usize,
    /// Longest action sequence (including `EOS`) the decoder will produce or train on.
    pub max_len: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { d_model: 64, heads: 4, layers: 2, d_ff: 128, max_len: 128 }
    }
}

impl PlannerConfig {
    pub const ENV_VOCAB: usize = EnvToken::VOCAB;
    pub const ACTION_VOCAB: usize = ActionToken::VOCAB;

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<(), TransformerError> {
        if [self.d_model, self.heads, self.layers, self.d_ff, self.max_len].contains(&0) {
            return Err(TransformerError::Config("all dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(TransformerError::Config(format!("d_model {} not divisible by {} heads", self.d_model, self.heads)));
        }
        Ok(())
    }
}
