//! The subcommands, callable without going through argument parsing.

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use hpl_core::datagen::bfs_distances;
use hpl_core::evalkit::{ablation_configs, evaluate, run_ablation, AblationReport, Dataset, TrainingTimes};
use hpl_core::fixtures::{regenerate_fixtures, write_fixtures, FixtureError};
use hpl_core::gan::PathGan;
use hpl_core::gcn::GcnModel;
use hpl_core::gridworld::simulate_joint;
use hpl_core::planners::{prioritized_multi, Models, MultiConfig, MultiError};
use hpl_core::tensor::Checkpoint;
use hpl_core::transformer::{ImitationConfig, TransformerModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{generate, generate_pair, load_datasets, load_dir, load_map, load_scenario, write_pair};
use crate::io::{atomic_write, read_text};
use crate::training::{train_gan, train_gcn, train_transformer, Trained};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Transformer,
    Gcn,
    Gan,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Transformer => "transformer",
            Stage::Gcn => "gcn",
            Stage::Gan => "gan",
        }
    }

    pub fn checkpoint_file(self) -> String {
        format!("{}.ckpt", self.name())
    }
}

/// Sidecar written next to each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub stage: String,
    pub seed: u64,
    pub steps: usize,
    pub training_time_s: f64,
    pub final_loss: f64,
}

pub fn gen_maps(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let seed = cfg.require_seed()?;
    if !(0.0..=0.45).contains(&cfg.density) {
        return Err(CliError::BadInput(format!("density {} outside [0, 0.45]", cfg.density)));
    }
    if cfg.width == 0 || cfg.height == 0 || cfg.agents == 0 {
        return Err(CliError::BadInput("width, height and agents must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::new();
    for i in 0..cfg.count {
        let (map, sc) = generate_pair(cfg.width, cfg.height, cfg.density, cfg.agents, &mut rng)?;
        write_pair(&cfg.out, i, &map, &sc)?;
        written.push(cfg.out.join(format!("inst_{i:04}.map")));
    }
    Ok(written)
}

fn training_instances(cfg: &RunConfig, seed: u64) -> Result<Vec<hpl_core::datagen::Instance>, CliError> {
    let mut inst = match &cfg.data {
        Some(dir) => load_dir(dir)?,
        None => generate(cfg.train_count, cfg.width, cfg.height, cfg.density, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    if cfg.overfit {
        inst.truncate(1);
    }
    Ok(inst)
}

fn save<M>(out: &FsPath, stage: Stage, seed: u64, t: &Trained<M>, ck: &Checkpoint) -> Result<TrainMeta, CliError> {
    atomic_write(&out.join(stage.checkpoint_file()), &ck.render())?;
    atomic_write(&out.join(format!("{}_loss.csv", stage.name())), &t.log)?;
    let meta = TrainMeta {
        stage: stage.name().into(),
        seed,
        steps: t.steps,
        training_time_s: t.seconds,
        final_loss: t.final_loss,
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    atomic_write(&out.join(format!("{}.meta.json", stage.name())), &json)?;
    Ok(meta)
}

fn load_checkpoint(dir: &FsPath, stage: Stage) -> Result<Option<Checkpoint>, CliError> {
    let path = dir.join(stage.checkpoint_file());
    if !path.exists() {
        return Ok(None);
    }
    Checkpoint::parse(&read_text(&path)?)
        .map(Some)
        .map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))
}

fn load_meta(dir: &FsPath, stage: Stage) -> Option<TrainMeta> {
    let text = std::fs::read_to_string(dir.join(format!("{}.meta.json", stage.name()))).ok()?;
    serde_json::from_str(&text).ok()
}

/// Trains one stage and writes its checkpoint, loss log and metadata to `out`.
pub fn train(stage: Stage, cfg: &RunConfig) -> Result<TrainMeta, CliError> {
    let seed = cfg.require_seed()?;
    let inst = training_instances(cfg, seed)?;
    match stage {
        Stage::Transformer => {
            let imitation = if cfg.overfit {
                ImitationConfig { epochs: cfg.overfit_steps, batch: 1, lr: 1e-2, seed }
            } else {
                ImitationConfig { seed, ..cfg.imitation() }
            };
            let t = train_transformer(&inst, cfg.planner(), &imitation, seed)?;
            save(&cfg.out, stage, seed, &t, &t.model.to_checkpoint())
        }
        Stage::Gcn => {
            let t = train_gcn(&inst, cfg.gcn(), cfg.gcn_epochs, cfg.gcn_batch, cfg.gcn_lr, seed)?;
            save(&cfg.out, stage, seed, &t, &t.model.to_checkpoint())
        }
        Stage::Gan => {
            let gcn = match &cfg.models {
                Some(dir) => load_checkpoint(dir, Stage::Gcn)?
                    .map(|ck| GcnModel::from_checkpoint(&ck))
                    .transpose()
                    .map_err(|e| CliError::BadInput(e.to_string()))?,
                None => None,
            };
            let t = train_gan(&inst, cfg.gan(), gcn.as_ref(), cfg.gan_iterations, seed)?;
            save(&cfg.out, stage, seed, &t, &t.model.to_checkpoint())
        }
    }
}

/// Models for a run, owned.
#[derive(Debug, Clone, Default)]
pub struct LoadedModels {
    pub transformer: Option<TransformerModel>,
    pub gcn: Option<GcnModel>,
    pub gan: Option<PathGan>,
    pub times: TrainingTimes,
}

impl LoadedModels {
    pub fn models(&self) -> Models<'_> {
        Models { transformer: self.transformer.as_ref(), gcn: self.gcn.as_ref(), gan: self.gan.as_ref(), cargo: None }
    }

    /// Loads every checkpoint present in `dir`.
    pub fn load(dir: &FsPath) -> Result<Self, CliError> {
        let bad = |e: String| CliError::BadInput(e);
        let mut m = LoadedModels::default();
        if let Some(ck) = load_checkpoint(dir, Stage::Transformer)? {
            m.transformer = Some(TransformerModel::from_checkpoint(&ck).map_err(|e| bad(e.to_string()))?);
        }
        if let Some(ck) = load_checkpoint(dir, Stage::Gcn)? {
            m.gcn = Some(GcnModel::from_checkpoint(&ck).map_err(|e| bad(e.to_string()))?);
        }
        if let Some(ck) = load_checkpoint(dir, Stage::Gan)? {
            m.gan = Some(PathGan::from_checkpoint(&ck).map_err(|e| bad(e.to_string()))?);
        }
        let time = |s| load_meta(dir, s).map_or(0.0, |m| m.training_time_s);
        m.times = TrainingTimes { transformer: time(Stage::Transformer), gcn: time(Stage::Gcn), gan: time(Stage::Gan) };
        Ok(m)
    }

    /// Trains all three stages in-process from the run configuration.
    pub fn train_all(cfg: &RunConfig, seed: u64) -> Result<Self, CliError> {
        let inst = training_instances(cfg, seed)?;
        let tf = train_transformer(&inst, cfg.planner(), &ImitationConfig { seed, ..cfg.imitation() }, seed)?;
        let gcn = train_gcn(&inst, cfg.gcn(), cfg.gcn_epochs, cfg.gcn_batch, cfg.gcn_lr, seed)?;
        let gan = train_gan(&inst, cfg.gan(), Some(&gcn.model), cfg.gan_iterations, seed)?;
        Ok(Self {
            times: TrainingTimes { transformer: tf.seconds, gcn: gcn.seconds, gan: gan.seconds },
            transformer: Some(tf.model),
            gcn: Some(gcn.model),
            gan: Some(gan.model),
        })
    }

    fn check(&self, cfg: &RunConfig) -> Result<(), CliError> {
        for (on, present, name) in [
            (cfg.use_transformer, self.transformer.is_some(), "transformer"),
            (cfg.use_gnn, self.gcn.is_some(), "gcn"),
            (cfg.use_gan, self.gan.is_some(), "gan"),
        ] {
            if on && !present {
                return Err(CliError::BadInput(format!("stage {name} is enabled but {name}.ckpt was not found")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    pub steps: usize,
    pub optimal: usize,
    pub path_length: f64,
    pub time_efficiency: f64,
    pub energy: f64,
    pub rerouted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub agents: Vec<AgentReport>,
    pub makespan: usize,
    pub sum_of_costs: usize,
    pub conflicts: usize,
    pub parameters: usize,
}

/// Plans every scenario agent and writes `plan.txt` and `report.json`.
pub fn plan(cfg: &RunConfig) -> Result<PlanReport, CliError> {
    let map_path = cfg.map.as_ref().ok_or_else(|| CliError::BadInput("plan needs --map".into()))?;
    let scen_path = cfg.scen.as_ref().ok_or_else(|| CliError::BadInput("plan needs --scen".into()))?;
    let map = load_map(map_path)?;
    let sc = load_scenario(scen_path, &map)?;
    let metrics = cfg.metrics()?;
    let loaded = match &cfg.models {
        Some(dir) => LoadedModels::load(dir)?,
        None => LoadedModels::default(),
    };
    loaded.check(cfg)?;
    let pipeline = cfg.pipeline();
    let joint = prioritized_multi(&map, &sc, loaded.models(), &MultiConfig { pipeline, horizon: cfg.horizon })
        .map_err(|e| match e {
            MultiError::NoJointPlan { .. } => CliError::Planning(e.to_string()),
            MultiError::Plan { .. } => CliError::Planning(e.to_string()),
        })?;
    let conflicts = simulate_joint(&map, &joint.paths).len();
    if conflicts > 0 {
        return Err(CliError::Planning(format!("joint plan has {conflicts} conflicts")));
    }

    let mut agents = Vec::new();
    for (i, (task, path)) in sc.agents.iter().zip(&joint.paths).enumerate() {
        let optimal = bfs_distances(&map, task.start)[map.index(task.goal)].unwrap_or(path.steps());
        let m = evaluate(path, optimal, &metrics).map_err(|e| CliError::Planning(e.to_string()))?;
        agents.push(AgentReport {
            agent: i,
            start: [task.start.x, task.start.y],
            goal: [task.goal.x, task.goal.y],
            steps: path.steps(),
            optimal,
            path_length: m.path_length,
            time_efficiency: m.time_efficiency,
            energy: m.energy,
            rerouted: joint.rerouted[i],
        });
    }
    let report = PlanReport {
        agents,
        makespan: joint.makespan(),
        sum_of_costs: joint.sum_of_costs(),
        conflicts,
        parameters: hpl_core::evalkit::count_params(loaded.models(), &pipeline),
    };

    let mut text = String::new();
    for t in 0..=joint.makespan() {
        let cells: Vec<String> = joint.paths.iter().map(|p| p.at(t)).map(|c| format!("{},{}", c.x, c.y)).collect();
        let _ = writeln!(text, "{t} {}", cells.join(" "));
    }
    atomic_write(&cfg.out.join("plan.txt"), &text)?;
    atomic_write(&cfg.out.join("report.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(report)
}

/// Runs the four-row ablation and writes `ablation.csv` and `ablation.json`.
pub fn ablate(cfg: &RunConfig) -> Result<AblationReport, CliError> {
    let seed = cfg.require_seed()?;
    let metrics = cfg.metrics()?;
    let datasets: Vec<Dataset> = match &cfg.data {
        Some(dir) => load_datasets(dir)?
            .into_iter()
            .map(|(name, instances)| Dataset { name, instances })
            .collect(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let name = format!("random{}x{}", cfg.width, cfg.height);
            vec![Dataset { name, instances: generate(cfg.count, cfg.width, cfg.height, cfg.density, &mut rng) }]
        }
    };
    let loaded = match &cfg.models {
        Some(dir) => LoadedModels::load(dir)?,
        None => {
            // Training data must not overlap the evaluation sets.
            let train_cfg = RunConfig { data: None, ..cfg.clone() };
            LoadedModels::train_all(&train_cfg, seed)?
        }
    };
    let all = RunConfig { use_transformer: true, use_gnn: true, use_gan: true, ..cfg.clone() };
    loaded.check(&all)?;
    let report = run_ablation(&datasets, &ablation_configs(&cfg.pipeline()), loaded.models(), &loaded.times, &metrics)
        .map_err(|e| CliError::BadInput(e.to_string()))?;
    atomic_write(&cfg.out.join("ablation.csv"), &report.to_csv())?;
    atomic_write(&cfg.out.join("ablation.json"), &report.to_json())?;
    Ok(report)
}

/// Writes the fixture set to `dir`, or with `check` compares against it.
pub fn fixtures(dir: &FsPath, seed: u64, check: bool) -> Result<usize, CliError> {
    if check {
        return regenerate_fixtures(seed, dir).map(|f| f.len()).map_err(|e| match e {
            FixtureError::Io(io) => CliError::io(dir, io),
            other => CliError::BadInput(other.to_string()),
        });
    }
    write_fixtures(seed, dir).map_err(|e| CliError::io(dir, e))?;
    Ok(hpl_core::fixtures::build_fixtures(seed).len())
}
