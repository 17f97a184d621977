//! Path metrics, parameter accounting and the ablation report.
//!
//! Time is traversal time: every timestep of a path, waits included, takes
//! `step_time` seconds. Planner CPU time is reported separately as inference
//! time.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Instance;
use crate::gan::PathGan;
use crate::gcn::GcnModel;
use crate::gridworld::{validate_path, Path};
use crate::planners::{hybrid_plan, Models, PipelineConfig};
use crate::transformer::TransformerModel;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("optimal time is zero but planned time is {planned}")]
    ZeroOptimal { planned: f64 },

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Average robot power in watts.
    pub power: f64,
    /// Seconds per timestep.
    pub step_time: f64,
    /// Report `planned / optimal * 100` instead of the inverted ratio.
    pub literal_efficiency: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { power: 1.0, step_time: 1.0, literal_efficiency: false }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.power > 0.0) {
            return Err(MetricsError::NonPositive { name: "power", value: self.power });
        }
        if !(self.step_time > 0.0) {
            return Err(MetricsError::NonPositive { name: "step_time", value: self.step_time });
        }
        Ok(())
    }
}

/// Sum of per-step distances; a move is 1 and a wait is 0.
pub fn path_length(path: &Path) -> f64 {
    path.moves() as f64
}

/// Timesteps (waits included) times `step_time`.
pub fn time_planned(path: &Path, cfg: &MetricsConfig) -> f64 {
    path.steps() as f64 * cfg.step_time
}

/// `optimal / planned * 100`, clamped to 100. Zero over zero counts as optimal.
pub fn time_efficiency(planned: f64, optimal: f64) -> Result<f64, MetricsError> {
    if optimal <= 0.0 {
        return if planned <= 0.0 { Ok(100.0) } else { Err(MetricsError::ZeroOptimal { planned }) };
    }
    if planned <= 0.0 {
        return Ok(100.0);
    }
    Ok((optimal / planned * 100.0).min(100.0))
}

/// `planned / optimal * 100`, unclamped.
pub fn time_efficiency_literal(planned: f64, optimal: f64) -> Result<f64, MetricsError> {
    if optimal <= 0.0 {
        return if planned <= 0.0 { Ok(100.0) } else { Err(MetricsError::ZeroOptimal { planned }) };
    }
    Ok(planned / optimal * 100.0)
}

pub fn energy(planned: f64, cfg: &MetricsConfig) -> f64 {
    cfg.power * planned
}

/// Formats an efficiency the way report tables print it.
pub fn format_percent(v: f64) -> String {
    format!("{v:.2}")
}

/// Scalar count over every learnable tensor.
pub trait ParamCount {
    fn param_count(&self) -> usize;
}

impl ParamCount for TransformerModel {
    fn param_count(&self) -> usize {
        self.params.count()
    }
}

impl ParamCount for GcnModel {
    fn param_count(&self) -> usize {
        self.params.count()
    }
}

impl ParamCount for PathGan {
    fn param_count(&self) -> usize {
        PathGan::param_count(self)
    }
}

/// Parameters of the models a configuration actually runs. The graph model
/// counts when it biases costs or supplies the GAN condition.
pub fn count_params(models: Models, config: &PipelineConfig) -> usize {
    let tf = models.transformer.filter(|_| config.use_transformer).map_or(0, ParamCount::param_count);
    let gan = models.gan.filter(|_| config.use_gan).map_or(0, ParamCount::param_count);
    let gcn_used = config.use_gnn || (config.use_gan && models.gan.is_some());
    let gcn = models.gcn.filter(|_| gcn_used).map_or(0, ParamCount::param_count);
    tf + gcn + gan
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub path_length: f64,
    pub time_efficiency: f64,
    pub energy: f64,
}

/// Metrics of one planned path against the instance's optimal step count.
pub fn evaluate(path: &Path, optimal_steps: usize, cfg: &MetricsConfig) -> Result<MetricsReport, MetricsError> {
    let planned = time_planned(path, cfg);
    let optimal = optimal_steps as f64 * cfg.step_time;
    let time_efficiency =
        if cfg.literal_efficiency { time_efficiency_literal(planned, optimal)? } else { time_efficiency(planned, optimal)? };
    Ok(MetricsReport { path_length: path_length(path), time_efficiency, energy: energy(planned, cfg) })
}

/// Named instance collection.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub instances: Vec<Instance>,
}

/// Wall-clock seconds spent training each stage's model.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainingTimes {
    pub transformer: f64,
    pub gcn: f64,
    pub gan: f64,
}

impl TrainingTimes {
    fn for_config(&self, models: Models, config: &PipelineConfig) -> f64 {
        let gcn_used = config.use_gnn || (config.use_gan && models.gan.is_some());
        [(config.use_transformer, self.transformer), (gcn_used && models.gcn.is_some(), self.gcn), (config.use_gan, self.gan)]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, t)| t)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub dataset: String,
    pub path_length: f64,
    pub time_efficiency: f64,
    pub energy: f64,
    pub parameters: usize,
    pub training_time_s: f64,
    pub inference_time_ms: f64,
    pub failures: usize,
}

pub const CSV_HEADER: &str =
    "config,dataset,path_length,time_efficiency,energy,parameters,training_time_s,inference_time_ms,failures";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.2},{:.4},{},{:.3},{:.3},{}",
                r.config,
                r.dataset,
                r.path_length,
                r.time_efficiency,
                r.energy,
                r.parameters,
                r.training_time_s,
                r.inference_time_ms,
                r.failures
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialize")
    }
}

/// The four standard rows: Transformer alone, then adding the graph bias,
/// the GAN, and both.
pub fn ablation_configs(base: &PipelineConfig) -> Vec<(String, PipelineConfig)> {
    [("baseline", false, false), ("+gnn", true, false), ("+gan", false, true), ("+gnn+gan", true, true)]
        .into_iter()
        .map(|(name, gnn, gan)| {
            (name.to_string(), PipelineConfig { use_transformer: true, use_gnn: gnn, use_gan: gan, ..*base })
        })
        .collect()
}

/// Thread count from `HPL_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("HPL_THREADS").ok()?.trim().parse().ok().filter(|n| *n > 0)
}

struct Outcome {
    metrics: Option<MetricsReport>,
    ms: f64,
}

fn run_one(inst: &Instance, models: Models, config: &PipelineConfig, cfg: &MetricsConfig) -> Outcome {
    let t0 = Instant::now();
    let planned = hybrid_plan(&inst.map, inst.start, inst.goal, models, config);
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    let metrics = planned
        .ok()
        .filter(|r| validate_path(&inst.map, &r.path, inst.start, inst.goal))
        .and_then(|r| evaluate(&r.path, inst.optimal, cfg).ok());
    Outcome { metrics, ms }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One row per `(config, dataset)` in config-major order. Planner errors are
/// counted as failures and excluded from the metric means.
pub fn run_ablation(
    datasets: &[Dataset],
    configs: &[(String, PipelineConfig)],
    models: Models,
    times: &TrainingTimes,
    cfg: &MetricsConfig,
) -> Result<AblationReport, MetricsError> {
    cfg.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = thread_cap() {
            b = b.num_threads(n);
        }
        b.build().expect("thread pool")
    };
    let mut rows = Vec::with_capacity(configs.len() * datasets.len());
    for (name, config) in configs {
        for ds in datasets {
            let outcomes: Vec<Outcome> =
                pool.install(|| ds.instances.par_iter().map(|inst| run_one(inst, models, config, cfg)).collect());
            let ok: Vec<&MetricsReport> = outcomes.iter().filter_map(|o| o.metrics.as_ref()).collect();
            rows.push(AblationRow {
                config: name.clone(),
                dataset: ds.name.clone(),
                path_length: mean(ok.iter().map(|m| m.path_length)),
                time_efficiency: mean(ok.iter().map(|m| m.time_efficiency)),
                energy: mean(ok.iter().map(|m| m.energy)),
                parameters: count_params(models, config),
                training_time_s: times.for_config(models, config),
                inference_time_ms: mean(outcomes.iter().map(|o| o.ms)),
                failures: outcomes.len() - ok.len(),
            });
        }
    }
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Action, Cell};

    fn walk(actions: &[Action]) -> Path {
        Path::from_actions(Cell::new(5, 5), actions).unwrap()
    }

    #[test]
    fn length_examples() {
        assert_eq!(path_length(&Path::single(Cell::new(0, 0))), 0.0);
        assert_eq!(path_length(&walk(&[Action::Right; 4])), 4.0);
        assert_eq!(path_length(&walk(&[Action::Right, Action::Wait, Action::Down])), 2.0);
    }

    #[test]
    fn time_examples() {
        let unit = MetricsConfig::default();
        assert_eq!(time_planned(&Path::single(Cell::new(0, 0)), &unit), 0.0);
        assert_eq!(time_planned(&walk(&[Action::Up; 4]), &unit), 4.0);
        let two = MetricsConfig { step_time: 2.0, ..unit };
        let p = walk(&[Action::Up, Action::Wait, Action::Left, Action::Wait, Action::Down]);
        assert_eq!(time_planned(&p, &two), 10.0);
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(time_efficiency(7.0, 7.0), Ok(100.0));
        assert_eq!(time_efficiency(10.0, 5.0), Ok(50.0));
        assert_eq!(time_efficiency(3.0, 5.0), Ok(100.0));
        assert_eq!(time_efficiency(3.0, 0.0), Err(MetricsError::ZeroOptimal { planned: 3.0 }));
        assert_eq!(time_efficiency_literal(10.0, 5.0), Ok(200.0));
        assert_eq!(format_percent(95.79), "95.79");
        assert_eq!(format_percent(100.0 * 91.0 / 95.0), "95.79");
    }

    #[test]
    fn energy_examples() {
        let cfg = MetricsConfig { power: 2.0, ..MetricsConfig::default() };
        assert_eq!(energy(5.0, &cfg), 10.0);
        assert_eq!(energy(0.0, &MetricsConfig::default()), 0.0);
        let p = walk(&[Action::Down; 4]);
        assert_eq!(energy(time_planned(&p, &MetricsConfig::default()), &MetricsConfig::default()), 4.0);
    }

    #[test]
    fn bad_config() {
        assert!(MetricsConfig { power: 0.0, ..MetricsConfig::default() }.validate().is_err());
        assert!(MetricsConfig { step_time: -1.0, ..MetricsConfig::default() }.validate().is_err());
    }

    #[test]
    fn no_models_no_params() {
        assert_eq!(count_params(Models::default(), &PipelineConfig::default()), 0);
    }

    #[test]
    fn row_order() {
        let names: Vec<String> = ablation_configs(&PipelineConfig::default()).into_iter().map(|c| c.0).collect();
        assert_eq!(names, ["baseline", "+gnn", "+gan", "+gnn+gan"]);
    }
}
