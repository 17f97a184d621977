//! Minibatch imitation training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{TokenSeq, TransformerError, TransformerModel};
use crate::gridworld::Path;
use crate::tensor::{Adam, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImitationConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self { epochs: 20, batch: 16, lr: 1e-3, seed: 0 }
    }
}

/// Shuffled minibatch training; returns the mean pre-step loss of each epoch.
/// `on_step(epoch, step, loss)` sees every optimizer step.
pub fn train_imitation(
    model: &mut TransformerModel,
    data: &[(TokenSeq, Path)],
    cfg: &ImitationConfig,
    mut on_step: impl FnMut(usize, usize, f64),
) -> Result<Vec<f64>, TransformerError> {
    if data.is_empty() || cfg.batch == 0 {
        return Err(TransformerError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params, AdamConfig::with_alpha(cfg.lr));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<(TokenSeq, Path)> = chunk.iter().map(|&i| data[i].clone()).collect();
            let loss = model.train_step(&batch, &mut adam)?;
            on_step(epoch, adam.steps() as usize, loss);
            total += loss;
            batches += 1;
        }
        curve.push(total / batches as f64);
    }
    Ok(curve)
}
