//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use the field
//! names of [`RunConfig`]; command-line flags are applied afterwards and win.

use std::path::PathBuf;

use hpl_core::evalkit::MetricsConfig;
use hpl_core::gan::{GanConfig, GenLoss};
use hpl_core::gcn::GcnConfig;
use hpl_core::planners::{Fallback, PipelineConfig};
use hpl_core::transformer::{DecodeMode, ImitationConfig, PlannerConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub map: Option<PathBuf>,
    pub scen: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: PathBuf,

    pub use_transformer: bool,
    pub use_gnn: bool,
    pub use_gan: bool,
    pub lambda: f64,
    pub candidates: usize,
    pub fallback: Fallback,
    pub decode: DecodeMode,
    pub horizon: Option<usize>,

    pub power: f64,
    pub step_time: f64,
    pub literal_efficiency: bool,

    pub count: usize,
    pub train_count: usize,
    pub width: usize,
    pub height: usize,
    pub density: f64,
    pub agents: usize,

    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub overfit: bool,
    pub overfit_steps: usize,

    pub gcn_layers: usize,
    pub gcn_hidden: usize,
    pub gcn_epochs: usize,
    pub gcn_batch: usize,
    pub gcn_lr: f64,

    pub noise_dim: usize,
    pub gan_batch: usize,
    pub gan_lr: f64,
    pub gan_iterations: usize,
    pub gan_hidden: usize,
    pub gan_max_len: usize,
    pub lr_decay: f64,
    pub epoch_len: usize,
    pub supervised_weight: f64,
    pub batch_norm: bool,
    pub minimax: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gan = GanConfig::default();
        Self {
            seed: None,
            map: None,
            scen: None,
            data: None,
            models: None,
            out: PathBuf::from("out"),
            use_transformer: true,
            use_gnn: true,
            use_gan: true,
            lambda: 0.5,
            candidates: 8,
            fallback: Fallback::AStar,
            decode: DecodeMode::Constrained,
            horizon: None,
            power: 1.0,
            step_time: 1.0,
            literal_efficiency: false,
            count: 20,
            train_count: 500,
            width: 8,
            height: 8,
            density: 0.1,
            agents: 1,
            d_model: 32,
            heads: 4,
            layers: 2,
            d_ff: 64,
            max_len: 64,
            epochs: 15,
            batch: 16,
            lr: 3e-3,
            overfit: false,
            overfit_steps: 200,
            gcn_layers: 2,
            gcn_hidden: 32,
            gcn_epochs: 5,
            gcn_batch: 16,
            gcn_lr: 3e-3,
            noise_dim: gan.noise_dim,
            gan_batch: gan.batch,
            gan_lr: gan.lr,
            gan_iterations: gan.min_iterations,
            gan_hidden: gan.hidden,
            gan_max_len: 16,
            lr_decay: gan.lr_decay,
            epoch_len: gan.epoch_len,
            supervised_weight: gan.supervised_weight,
            batch_norm: gan.batch_norm,
            minimax: false,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::BadInput(format!("bad value {value:?} for {key}")))
}

fn flag(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        v => Err(CliError::BadInput(format!("bad boolean {v:?} for {key}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::BadInput(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies `key=value`.
    pub fn apply_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| CliError::BadInput(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    /// Comma-separated subset of `transformer,gnn,gan`, or `none`.
    pub fn set_stages(&mut self, list: &str) -> Result<(), CliError> {
        self.use_transformer = false;
        self.use_gnn = false;
        self.use_gan = false;
        for s in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match s {
                "transformer" => self.use_transformer = true,
                "gnn" | "gcn" => self.use_gnn = true,
                "gan" => self.use_gan = true,
                "none" => {}
                other => return Err(CliError::BadInput(format!("unknown stage {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let path = || Some(PathBuf::from(v));
        match key {
            "seed" => self.seed = Some(num(key, v)?),
            "map" => self.map = path(),
            "scen" => self.scen = path(),
            "data" => self.data = path(),
            "models" => self.models = path(),
            "out" => self.out = PathBuf::from(v),
            "stages" => self.set_stages(v)?,
            "use_transformer" => self.use_transformer = flag(key, v)?,
            "use_gnn" => self.use_gnn = flag(key, v)?,
            "use_gan" => self.use_gan = flag(key, v)?,
            "lambda" => self.lambda = num(key, v)?,
            "candidates" => self.candidates = num(key, v)?,
            "fallback" => {
                self.fallback = match v {
                    "astar" => Fallback::AStar,
                    "dijkstra" => Fallback::Dijkstra,
                    _ => return Err(CliError::BadInput(format!("unknown fallback {v:?}"))),
                }
            }
            "decode" => {
                self.decode = match v {
                    "constrained" => DecodeMode::Constrained,
                    "free" => DecodeMode::Free,
                    _ => return Err(CliError::BadInput(format!("unknown decode mode {v:?}"))),
                }
            }
            "horizon" => self.horizon = Some(num(key, v)?),
            "power" => self.power = num(key, v)?,
            "step_time" => self.step_time = num(key, v)?,
            "literal_efficiency" => self.literal_efficiency = flag(key, v)?,
            "count" => self.count = num(key, v)?,
            "train_count" => self.train_count = num(key, v)?,
            "width" => self.width = num(key, v)?,
            "height" => self.height = num(key, v)?,
            "density" => self.density = num(key, v)?,
            "agents" => self.agents = num(key, v)?,
            "d_model" => self.d_model = num(key, v)?,
            "heads" => self.heads = num(key, v)?,
            "layers" => self.layers = num(key, v)?,
            "d_ff" => self.d_ff = num(key, v)?,
            "max_len" => self.max_len = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch" => self.batch = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "overfit" => self.overfit = flag(key, v)?,
            "overfit_steps" => self.overfit_steps = num(key, v)?,
            "gcn_layers" => self.gcn_layers = num(key, v)?,
            "gcn_hidden" => self.gcn_hidden = num(key, v)?,
            "gcn_epochs" => self.gcn_epochs = num(key, v)?,
            "gcn_batch" => self.gcn_batch = num(key, v)?,
            "gcn_lr" => self.gcn_lr = num(key, v)?,
            "noise_dim" => self.noise_dim = num(key, v)?,
            "gan_batch" => self.gan_batch = num(key, v)?,
            "gan_lr" => self.gan_lr = num(key, v)?,
            "gan_iterations" => self.gan_iterations = num(key, v)?,
            "gan_hidden" => self.gan_hidden = num(key, v)?,
            "gan_max_len" => self.gan_max_len = num(key, v)?,
            "lr_decay" => self.lr_decay = num(key, v)?,
            "epoch_len" => self.epoch_len = num(key, v)?,
            "supervised_weight" => self.supervised_weight = num(key, v)?,
            "batch_norm" => self.batch_norm = flag(key, v)?,
            "minimax" => self.minimax = flag(key, v)?,
            _ => return Err(CliError::BadInput(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::BadInput("this command needs --seed".into()))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            use_transformer: self.use_transformer,
            use_gnn: self.use_gnn,
            use_gan: self.use_gan,
            lambda: self.lambda,
            candidates: self.candidates,
            fallback: self.fallback,
            decode: self.decode,
            seed: self.seed.unwrap_or(0),
        }
    }

    pub fn metrics(&self) -> Result<MetricsConfig, CliError> {
        let m = MetricsConfig { power: self.power, step_time: self.step_time, literal_efficiency: self.literal_efficiency };
        m.validate().map_err(|e| CliError::BadInput(e.to_string()))?;
        Ok(m)
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig { d_model: self.d_model, heads: self.heads, layers: self.layers, d_ff: self.d_ff, max_len: self.max_len }
    }

    pub fn imitation(&self) -> ImitationConfig {
        ImitationConfig { epochs: self.epochs, batch: self.batch, lr: self.lr, seed: self.seed.unwrap_or(0) }
    }

    pub fn gcn(&self) -> GcnConfig {
        GcnConfig { layers: self.gcn_layers, hidden: self.gcn_hidden }
    }

    pub fn gan(&self) -> GanConfig {
        GanConfig {
            noise_dim: self.noise_dim,
            batch: self.gan_batch,
            lr: self.gan_lr,
            min_iterations: self.gan_iterations,
            lr_decay: self.lr_decay,
            epoch_len: self.epoch_len,
            hidden: self.gan_hidden,
            max_len: self.gan_max_len,
            embed_dim: self.gcn_hidden,
            batch_norm: self.batch_norm,
            supervised_weight: self.supervised_weight,
            generator_loss: if self.minimax { GenLoss::Minimax } else { GenLoss::NonSaturating },
            candidates: self.candidates,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut cfg = RunConfig::parse("# run\nseed = 4\nlambda=0.25\n\nstages = gnn\n").unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.lambda, 0.25);
        assert!(cfg.use_gnn && !cfg.use_transformer && !cfg.use_gan);
        cfg.apply_pair("lambda=1").unwrap();
        assert_eq!(cfg.lambda, 1.0);
    }

    #[test]
    fn rejects_unknown() {
        assert!(RunConfig::parse("nope = 1").is_err());
        assert!(RunConfig::parse("seed").is_err());
        assert!(RunConfig::parse("stages = transformer,foo").is_err());
        assert!(RunConfig::parse("overfit = maybe").is_err());
    }

    #[test]
    fn stages_none() {
        let cfg = RunConfig::parse("stages = none").unwrap();
        assert!(!cfg.use_transformer && !cfg.use_gnn && !cfg.use_gan);
    }
}
