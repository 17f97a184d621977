use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hpl_cli::io::read_text;
use hpl_cli::{CliError, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "hpl", version, about = "Hybrid neural path planning lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key = value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    #[arg(long, global = true)]
    scen: Option<PathBuf>,
    /// Directory of map/scen pairs.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Directory holding checkpoints.
    #[arg(long, global = true)]
    models: Option<PathBuf>,
    /// Comma-separated stages: transformer,gnn,gan (or none).
    #[arg(long, global = true)]
    stages: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    candidates: Option<usize>,
    #[arg(long, global = true)]
    power: Option<f64>,
    #[arg(long = "step-time", global = true)]
    step_time: Option<f64>,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Transformer,
    Gcn,
    Gan,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random movingai maps and scenarios.
    GenMaps {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        density: Option<f64>,
        #[arg(long)]
        agents: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one stage and write its checkpoint and loss log.
    Train {
        #[arg(long, value_enum)]
        stage: StageArg,
        /// Train the transformer on a single instance.
        #[arg(long)]
        overfit: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Plan every agent of a scenario.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Run the four-row ablation and write CSV and JSON reports.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Write or verify the fixture set.
    Fixtures {
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn build_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::parse(&read_text(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    for (slot, v) in [(&mut cfg.map, &c.map), (&mut cfg.scen, &c.scen), (&mut cfg.data, &c.data), (&mut cfg.models, &c.models)] {
        if v.is_some() {
            *slot = v.clone();
        }
    }
    if let Some(s) = &c.stages {
        cfg.set_stages(s)?;
    }
    if let Some(v) = c.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = c.candidates {
        cfg.candidates = v;
    }
    if let Some(v) = c.power {
        cfg.power = v;
    }
    if let Some(v) = c.step_time {
        cfg.step_time = v;
    }
    for pair in &c.set {
        cfg.apply_pair(pair)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenMaps { count, width, height, density, agents, common } => {
            let mut cfg = build_config(&common)?;
            cfg.count = count.unwrap_or(cfg.count);
            cfg.width = width.unwrap_or(cfg.width);
            cfg.height = height.unwrap_or(cfg.height);
            cfg.density = density.unwrap_or(cfg.density);
            cfg.agents = agents.unwrap_or(cfg.agents);
            let files = hpl_cli::gen_maps(&cfg)?;
            println!("wrote {} instances to {}", files.len(), cfg.out.display());
        }
        Command::Train { stage, overfit, common } => {
            let mut cfg = build_config(&common)?;
            cfg.overfit |= overfit;
            let stage = match stage {
                StageArg::Transformer => Stage::Transformer,
                StageArg::Gcn => Stage::Gcn,
                StageArg::Gan => Stage::Gan,
            };
            let meta = hpl_cli::train(stage, &cfg)?;
            println!(
                "{}: {} steps in {:.1}s, final loss {:.5}",
                meta.stage, meta.steps, meta.training_time_s, meta.final_loss
            );
        }
        Command::Plan { common } => {
            let cfg = build_config(&common)?;
            let r = hpl_cli::plan(&cfg)?;
            println!("{} agents, makespan {}, sum of costs {}", r.agents.len(), r.makespan, r.sum_of_costs);
        }
        Command::Ablate { common } => {
            let cfg = build_config(&common)?;
            let r = hpl_cli::ablate(&cfg)?;
            print!("{}", r.to_csv());
        }
        Command::Fixtures { check, common } => {
            let cfg = build_config(&common)?;
            let dir = common.out.clone().unwrap_or_else(hpl_core::fixtures::fixture_dir);
            let seed = cfg.seed.unwrap_or(hpl_core::fixtures::FIXTURE_SEED);
            let n = hpl_cli::fixtures(&dir, seed, check)?;
            println!("{} {n} fixture files in {}", if check { "verified" } else { "wrote" }, dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
