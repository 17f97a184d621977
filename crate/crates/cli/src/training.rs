//! Training loops for the three learned stages, with per-step loss logs.

use std::fmt::Write as _;
use std::time::Instant;

use hpl_core::datagen::{expert_path, random_shortest_path, Instance};
use hpl_core::gan::{GanConfig, GanContext, GanExample, GanTrainer, PathGan};
use hpl_core::gcn::{path_membership, GcnConfig, GcnModel, GraphEmbedding};
use hpl_core::graph_env::{build_graph, CargoField, EnvGraph};
use hpl_core::gridworld::Scenario;
use hpl_core::tensor::{Adam, AdamConfig};
use hpl_core::transformer::{tokenize_env, train_imitation, ImitationConfig, PlannerConfig, TransformerModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    /// CSV loss curve, one row per optimizer step.
    pub log: String,
    pub steps: usize,
    pub seconds: f64,
    pub final_loss: f64,
}

fn diverged(stage: &str, step: usize, loss: f64) -> CliError {
    CliError::Divergence(format!("{stage} loss became {loss} at step {step}"))
}

pub fn train_transformer(
    instances: &[Instance],
    config: PlannerConfig,
    imitation: &ImitationConfig,
    model_seed: u64,
) -> Result<Trained<TransformerModel>, CliError> {
    let mut model = TransformerModel::new(config, model_seed).map_err(|e| CliError::BadInput(e.to_string()))?;
    let data = instances
        .iter()
        .map(|i| {
            let path = expert_path(i);
            tokenize_env(&i.map, i.start, i.goal).with_expert(&path).map(|s| (s, path))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::BadInput(e.to_string()))?;
    let mut log = String::from("step,epoch,loss\n");
    let (mut steps, mut last, mut bad) = (0, f64::NAN, None);
    let t0 = Instant::now();
    train_imitation(&mut model, &data, imitation, |epoch, step, loss| {
        let _ = writeln!(log, "{step},{epoch},{loss}");
        steps += 1;
        last = loss;
        if !loss.is_finite() && bad.is_none() {
            bad = Some(step);
        }
    })
    .map_err(|e| CliError::BadInput(e.to_string()))?;
    if let Some(step) = bad {
        return Err(diverged("transformer", step, last));
    }
    Ok(Trained { model, log, steps, seconds: t0.elapsed().as_secs_f64(), final_loss: last })
}

/// The planning graph of one instance, with no cargo weights.
pub fn instance_graph(inst: &Instance) -> EnvGraph {
    let sc = Scenario::single(&inst.map, inst.start, inst.goal).expect("instance endpoints are passable");
    build_graph(&inst.map, &sc, &CargoField::empty())
}

/// Fits node scores to expert-path membership.
pub fn train_gcn(
    instances: &[Instance],
    config: GcnConfig,
    epochs: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<Trained<GcnModel>, CliError> {
    if instances.is_empty() || batch == 0 {
        return Err(CliError::BadInput("gcn training needs instances and a positive batch".into()));
    }
    let mut model = GcnModel::new(config, seed);
    let graphs: Vec<EnvGraph> = instances.iter().map(instance_graph).collect();
    let targets: Vec<Vec<f64>> = instances.iter().zip(&graphs).map(|(i, g)| path_membership(g, &expert_path(i))).collect();
    let mut adam = Adam::new(&model.params, AdamConfig::with_alpha(lr));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut log = String::from("step,epoch,loss\n");
    let (mut steps, mut last) = (0, f64::NAN);
    let t0 = Instant::now();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let b: Vec<(&EnvGraph, &[f64])> = chunk.iter().map(|&k| (&graphs[k], targets[k].as_slice())).collect();
            let loss = model.train_batch(&b, &mut adam).map_err(|e| CliError::BadInput(e.to_string()))?;
            steps += 1;
            last = loss;
            let _ = writeln!(log, "{steps},{epoch},{loss}");
            if !loss.is_finite() {
                return Err(diverged("gcn", steps, loss));
            }
        }
    }
    Ok(Trained { model, log, steps, seconds: t0.elapsed().as_secs_f64(), final_loss: last })
}

/// Adversarial training on random shortest-path experts. Runs at least
/// `config.min_iterations` iterations; instances whose shortest path does not
/// fit in `max_len` are left out. With a graph model, its embedding of each
/// instance conditions the GAN.
pub fn train_gan(
    instances: &[Instance],
    config: GanConfig,
    gcn: Option<&GcnModel>,
    iterations: usize,
    seed: u64,
) -> Result<Trained<PathGan>, CliError> {
    let gan = PathGan::new(config, seed).map_err(|e| CliError::BadInput(e.to_string()))?;
    let usable: Vec<&Instance> = instances.iter().filter(|i| i.optimal < config.max_len).collect();
    if usable.is_empty() {
        return Err(CliError::BadInput(format!("no instance has a shortest path shorter than max_len {}", config.max_len)));
    }
    let embeddings: Vec<Option<GraphEmbedding>> = usable
        .iter()
        .map(|i| gcn.map(|g| g.embed(&instance_graph(i))).transpose())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::BadInput(e.to_string()))?;
    let mut trainer = GanTrainer::new(gan);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667);
    let mut log = String::from("step,d_loss,g_loss,supervised,lr\n");
    let mut last = f64::NAN;
    let total = iterations.max(config.min_iterations);
    let t0 = Instant::now();
    for step in 1..=total {
        let batch: Vec<GanExample> = (0..config.batch)
            .map(|_| {
                let k = rng.gen_range(0..usable.len());
                let inst = usable[k];
                let mut ctx = GanContext::new(&inst.map, inst.start, inst.goal);
                if let Some(e) = &embeddings[k] {
                    ctx = ctx.with_embedding(e);
                }
                let expert = random_shortest_path(&inst.map, inst.start, inst.goal, &mut rng).expect("instances are solvable");
                GanExample { ctx, expert }
            })
            .collect();
        let l = trainer.step(&batch, &mut rng).map_err(|e| CliError::BadInput(e.to_string()))?;
        let _ = writeln!(log, "{step},{},{},{},{}", l.d_loss, l.g_loss, l.supervised, trainer.lr());
        last = l.g_loss + config.supervised_weight * l.supervised;
        if ![l.d_loss, l.g_loss, l.supervised].iter().all(|v| v.is_finite()) {
            return Err(diverged("gan", step, last));
        }
    }
    Ok(Trained { model: trainer.gan, log, steps: total, seconds: t0.elapsed().as_secs_f64(), final_loss: last })
}
