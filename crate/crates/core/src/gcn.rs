//! Graph convolutional encoder over an [`EnvGraph`].
//!
//! Each layer aggregates neighbour states through the normalised adjacency
//! and applies a learned linear map with ReLU: `H' = ReLU(Â H W)`. A mean
//! readout followed by an affine projection gives the graph embedding `h_G`,
//! which is concatenated onto every final node state before a sigmoid scoring
//! head. Scores near 1 mark cells the model believes lie on a good path;
//! [`bias_costs`] turns them into a traversal cost field for search.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph_env::{EnvGraph, FEATURE_DIM};
use crate::gridworld::{GridMap, Path};
use crate::planners::CostField;
use crate::tensor::{init, Adam, Bound, Checkpoint, CheckpointError, LossKind, ParamId, ParamSet, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum GcnError {
    #[error("target has {found} entries, graph has {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcnConfig {
    pub layers: usize,
    pub hidden: usize,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self { layers: 2, hidden: 32 }
    }
}

/// Per-node desirability in `[0, 1]`, ordered like `EnvGraph::nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScores(pub Vec<f64>);

/// Global graph vector `h_G`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEmbedding(pub Vec<f64>);

#[derive(Debug, Clone)]
pub struct GcnModel {
    pub config: GcnConfig,
    pub params: ParamSet,
    layers: Vec<ParamId>,
    readout_w: ParamId,
    readout_b: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

/// `ReLU(Â H W)`.
pub fn gcn_layer(tape: &mut Tape, h: Var, a_hat: Var, w: Var) -> Result<Var, TensorError> {
    let agg = tape.matmul(a_hat, h)?;
    let lin = tape.matmul(agg, w)?;
    Ok(tape.relu(lin))
}

/// Mean over nodes followed by an affine projection.
pub fn readout(tape: &mut Tape, h: Var, w: Var, b: Var) -> Result<Var, TensorError> {
    let mean = tape.mean_rows(h);
    let proj = tape.matmul(mean, w)?;
    tape.add_row(proj, b)
}

/// Optimal-path membership labels (1 on path, 0 elsewhere) in node order.
pub fn path_membership(graph: &EnvGraph, path: &Path) -> Vec<f64> {
    let mut target = vec![0.0; graph.node_count()];
    for c in path.cells() {
        if let Some(i) = graph.node_of(*c) {
            target[i] = 1.0;
        }
    }
    target
}

/// `cost(cell) = 1 + lambda * (1 - score(cell))`, so every cost is at least 1.
pub fn bias_costs(map: &GridMap, scores: &NodeScores, lambda: f64) -> CostField {
    let lambda = lambda.max(0.0);
    let mut costs = vec![1.0; map.width() * map.height()];
    for (c, s) in map.passable_cells().zip(&scores.0) {
        costs[map.index(c)] = 1.0 + lambda * (1.0 - s.clamp(0.0, 1.0));
    }
    CostField::new(map, costs).expect("costs are at least 1 by construction")
}

struct Forward {
    scores: Var,
    embedding: Var,
}

impl GcnModel {
    pub fn new(config: GcnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut width = FEATURE_DIM;
        let layers = (0..config.layers)
            .map(|k| {
                let id = params.add(format!("gcn.layer{k}.w"), init::uniform(width, config.hidden, &mut rng));
                width = config.hidden;
                id
            })
            .collect();
        let readout_w = params.add("gcn.readout.w", init::uniform(width, config.hidden, &mut rng));
        let readout_b = params.add("gcn.readout.b", init::zeros(1, config.hidden));
        let head_w = params.add("gcn.head.w", init::uniform(width + config.hidden, 1, &mut rng));
        let head_b = params.add("gcn.head.b", init::zeros(1, 1));
        Self { config, params, layers, readout_w, readout_b, head_w, head_b }
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.hidden
    }

    /// Zeroes the scoring head so every score is exactly 0.5.
    pub fn zero_head(&mut self) {
        for id in [self.head_w, self.head_b] {
            self.params.get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, graph: &EnvGraph) -> Result<Forward, TensorError> {
        let n = graph.node_count();
        let a_hat = tape.constant(n, n, graph.norm_adjacency.clone())?;
        let mut h = tape.constant(n, FEATURE_DIM, graph.features.clone())?;
        for id in &self.layers {
            h = gcn_layer(tape, h, a_hat, p[*id])?;
        }
        let embedding = readout(tape, h, p[self.readout_w], p[self.readout_b])?;
        let broadcast = tape.gather_rows(embedding, &vec![0; n])?;
        let joined = tape.concat_cols(&[h, broadcast])?;
        let logits = tape.matmul(joined, p[self.head_w])?;
        let logits = tape.add_row(logits, p[self.head_b])?;
        Ok(Forward { scores: tape.sigmoid(logits), embedding })
    }

    pub fn score_nodes(&self, graph: &EnvGraph) -> Result<NodeScores, GcnError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let f = self.forward(&mut tape, &p, graph)?;
        Ok(NodeScores(tape.value(f.scores).to_vec()))
    }

    pub fn embed(&self, graph: &EnvGraph) -> Result<GraphEmbedding, GcnError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let f = self.forward(&mut tape, &p, graph)?;
        Ok(GraphEmbedding(tape.value(f.embedding).to_vec()))
    }

    /// MSE between node scores and `target`, recorded on `tape`.
    pub fn loss_on_tape(&self, tape: &mut Tape, p: &Bound, graph: &EnvGraph, target: &[f64]) -> Result<Var, GcnError> {
        if target.len() != graph.node_count() {
            return Err(GcnError::LengthMismatch { expected: graph.node_count(), found: target.len() });
        }
        let f = self.forward(tape, p, graph)?;
        Ok(tape.loss(LossKind::Mse, f.scores, target)?)
    }

    /// One Adam step on the MSE between scores and `target`; returns the pre-step loss.
    pub fn train_step(&mut self, graph: &EnvGraph, target: &[f64], adam: &mut Adam) -> Result<f64, GcnError> {
        self.train_batch(&[(graph, target)], adam)
    }

    /// Averaged loss over several graphs followed by one Adam step.
    pub fn train_batch(&mut self, batch: &[(&EnvGraph, &[f64])], adam: &mut Adam) -> Result<f64, GcnError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let mut total = None;
        for (graph, target) in batch {
            let l = self.loss_on_tape(&mut tape, &p, graph, target)?;
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        let total = total.ok_or(GcnError::LengthMismatch { expected: 1, found: 0 })?;
        let loss = tape.scale(total, 1.0 / batch.len() as f64);
        let value = tape.scalar(loss);
        let grads = tape.backward(loss)?;
        self.params.set_grads(&grads, &p);
        adam.step(&mut self.params)?;
        Ok(value)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.params.records())
            .with_meta("model", "gcn")
            .with_meta("layers", self.config.layers)
            .with_meta("hidden", self.config.hidden)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, GcnError> {
        let config = GcnConfig { layers: ck.meta_parse("layers")?, hidden: ck.meta_parse("hidden")? };
        let mut model = Self::new(config, 0);
        model.params.load(&ck.tensors)?;
        Ok(model)
    }
}
