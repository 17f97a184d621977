//! Small checked-in maps, scenarios and expected values.
//!
//! Every expected value in `expected.txt` names the check that produced it:
//! `check=bfs` for breadth-first distances and `check=formula` for metrics
//! computed in closed form from a path's move and wait counts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path as FsPath, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datagen::{bfs_distances, random_map, random_scenario};
use crate::gridworld::{render_map, render_scenario, AgentTask, Cell, GridMap, Scenario, Terrain};

/// Seed of the checked-in fixture set.
pub const FIXTURE_SEED: u64 = 7;

const RANDOM_MAPS: usize = 3;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture {file} differs from its regenerated copy")]
    FixtureDrift { file: String },

    #[error("fixture {file} is missing")]
    Missing { file: String },

    #[error("malformed expected line {line}: {text:?}")]
    Malformed { line: usize, text: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureFile {
    pub name: String,
    pub contents: String,
}

/// One expected optimal cost from `expected.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCost {
    pub map: String,
    pub start: Cell,
    pub goal: Cell,
    pub cost: f64,
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// 5×5 open map with a wall across row 2 except at column 4.
pub fn wall_gap_map() -> GridMap {
    let mut cells = vec![Terrain::Passable; 25];
    for x in 0..4 {
        cells[2 * 5 + x] = Terrain::Blocked;
    }
    GridMap::new(5, 5, cells).expect("valid")
}

fn with_hints(map: &GridMap, agents: Vec<AgentTask>) -> Scenario {
    let hints = agents
        .iter()
        .map(|t| bfs_distances(map, t.start)[map.index(t.goal)].map(|d| d as f64))
        .collect();
    Scenario::new(map, agents, hints).expect("endpoints are passable")
}

/// Rebuilds every fixture file in memory.
pub fn build_fixtures(seed: u64) -> Vec<FixtureFile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets: Vec<(String, GridMap, Scenario)> = Vec::new();

    let wall = wall_gap_map();
    let tasks = vec![
        AgentTask { start: Cell::new(0, 0), goal: Cell::new(0, 4) },
        AgentTask { start: Cell::new(4, 4), goal: Cell::new(0, 0) },
    ];
    let sc = with_hints(&wall, tasks);
    sets.push(("wall_gap".into(), wall, sc));

    let corridor = GridMap::open(5, 1);
    let sc = with_hints(&corridor, vec![AgentTask { start: Cell::new(0, 0), goal: Cell::new(4, 0) }]);
    sets.push(("corridor".into(), corridor, sc));

    let mut made = 0;
    while made < RANDOM_MAPS {
        let map = random_map(8, 8, 0.2, &mut rng);
        let Some(sc) = random_scenario(&map, 2, &mut rng) else { continue };
        let sc = with_hints(&map, sc.agents);
        sets.push((format!("random_{made}"), map, sc));
        made += 1;
    }

    let mut files = Vec::new();
    let mut expected = String::from("# map sx sy gx gy cost check\n");
    for (name, map, sc) in &sets {
        let map_name = format!("{name}.map");
        files.push(FixtureFile { name: map_name.clone(), contents: render_map(map) });
        files.push(FixtureFile { name: format!("{name}.scen"), contents: render_scenario(sc, &map_name, map) });
        for (t, hint) in sc.agents.iter().zip(&sc.optimal_hint) {
            let cost = hint.expect("fixture tasks are connected");
            let _ = writeln!(expected, "cost {map_name} {} {} {} {} {cost} check=bfs", t.start.x, t.start.y, t.goal.x, t.goal.y);
        }
    }
    expected.push_str("# metric moves waits step_time power value check\n");
    for (metric, moves, waits, step, power, value) in [
        ("path_length", 0, 0, 1.0, 1.0, 0.0),
        ("path_length", 4, 0, 1.0, 1.0, 4.0),
        ("path_length", 2, 1, 1.0, 1.0, 2.0),
        ("time_planned", 4, 0, 1.0, 1.0, 4.0),
        ("time_planned", 3, 2, 2.0, 1.0, 10.0),
        ("energy", 4, 0, 1.0, 1.0, 4.0),
        ("energy", 5, 0, 1.0, 2.0, 10.0),
    ] {
        let _ = writeln!(expected, "metric {metric} {moves} {waits} {step} {power} {value} check=formula");
    }
    files.push(FixtureFile { name: "expected.txt".into(), contents: expected });
    files
}

pub fn write_fixtures(seed: u64, dir: &FsPath) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for f in build_fixtures(seed) {
        fs::write(dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}

/// Rebuilds the fixtures and compares them with the copies in `dir`.
pub fn regenerate_fixtures(seed: u64, dir: &FsPath) -> Result<Vec<FixtureFile>, FixtureError> {
    let files = build_fixtures(seed);
    for f in &files {
        let on_disk = match fs::read_to_string(dir.join(&f.name)) {
            Ok(s) => s,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(FixtureError::Missing { file: f.name.clone() }),
            Err(e) => return Err(e.into()),
        };
        if on_disk != f.contents {
            return Err(FixtureError::FixtureDrift { file: f.name.clone() });
        }
    }
    Ok(files)
}

/// Reads the `cost` lines of `expected.txt`.
pub fn parse_expected_costs(text: &str) -> Result<Vec<ExpectedCost>, FixtureError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.first() != Some(&"cost") {
            continue;
        }
        let bad = || FixtureError::Malformed { line: i + 1, text: line.to_string() };
        if f.len() != 8 {
            return Err(bad());
        }
        let n = |k: usize| f[k].parse::<usize>().map_err(|_| bad());
        out.push(ExpectedCost {
            map: f[1].to_string(),
            start: Cell::new(n(2)?, n(3)?),
            goal: Cell::new(n(4)?, n(5)?),
            cost: f[6].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
