//! Instance sets on disk (movingai map/scen pairs) and seeded generation.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use hpl_core::datagen::{bfs_distances, random_instances, random_map, random_scenario, Instance};
use hpl_core::gridworld::{parse_map, parse_scenario, render_map, render_scenario, GridMap, Scenario};
use hpl_core::planners::shortest_path;
use rand::Rng;

use crate::io::{atomic_write, read_text};
use crate::CliError;

/// Attempts per generated instance before giving up.
pub const GEN_TRIES: usize = 1000;

pub fn load_map(path: &FsPath) -> Result<GridMap, CliError> {
    parse_map(&read_text(path)?).map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))
}

pub fn load_scenario(path: &FsPath, map: &GridMap) -> Result<Scenario, CliError> {
    parse_scenario(&read_text(path)?, map).map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))
}

/// One instance per scenario agent, with the optimal step count from BFS.
/// Unreachable tasks are skipped.
pub fn instances_of(map: &GridMap, scenario: &Scenario) -> Vec<Instance> {
    scenario
        .agents
        .iter()
        .filter_map(|t| {
            let optimal = bfs_distances(map, t.start)[map.index(t.goal)]?;
            Some(Instance { map: map.clone(), start: t.start, goal: t.goal, optimal })
        })
        .collect()
}

/// Every `<stem>.map` in `dir` with a matching `<stem>.scen`, in name order.
pub fn load_dir(dir: &FsPath) -> Result<Vec<Instance>, CliError> {
    let mut stems: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "map"))
        .collect();
    stems.sort();
    let mut out = Vec::new();
    for map_path in stems {
        let scen_path = map_path.with_extension("scen");
        if !scen_path.exists() {
            continue;
        }
        let map = load_map(&map_path)?;
        out.extend(instances_of(&map, &load_scenario(&scen_path, &map)?));
    }
    if out.is_empty() {
        return Err(CliError::BadInput(format!("no map/scen pairs in {}", dir.display())));
    }
    Ok(out)
}

/// Named datasets under `dir`: each subdirectory holding map files, or `dir`
/// itself when it has none.
pub fn load_datasets(dir: &FsPath) -> Result<Vec<(String, Vec<Instance>)>, CliError> {
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let name = |p: &FsPath| p.file_name().map_or("data".into(), |n| n.to_string_lossy().into_owned());
    let mut sets = Vec::new();
    for d in subdirs {
        if let Ok(inst) = load_dir(&d) {
            sets.push((name(&d), inst));
        }
    }
    if sets.is_empty() {
        sets.push((name(dir), load_dir(dir)?));
    }
    Ok(sets)
}

pub fn generate(count: usize, width: usize, height: usize, density: f64, rng: &mut impl Rng) -> Vec<Instance> {
    random_instances(count, width, height, density, rng)
}

/// A map plus a scenario whose hints are the A* costs.
pub fn generate_pair(
    width: usize,
    height: usize,
    density: f64,
    agents: usize,
    rng: &mut impl Rng,
) -> Result<(GridMap, Scenario), CliError> {
    for _ in 0..GEN_TRIES {
        let map = random_map(width, height, density, rng);
        let Some(sc) = random_scenario(&map, agents, rng) else { continue };
        let hints = sc
            .agents
            .iter()
            .map(|t| shortest_path(&map, t.start, t.goal).ok().map(|p| p.steps() as f64))
            .collect();
        let sc = Scenario::new(&map, sc.agents, hints).map_err(|e| CliError::BadInput(e.to_string()))?;
        return Ok((map, sc));
    }
    Err(CliError::ExhaustedRetries(GEN_TRIES))
}

/// Writes `inst_NNNN.map` and `inst_NNNN.scen`.
pub fn write_pair(dir: &FsPath, index: usize, map: &GridMap, sc: &Scenario) -> Result<(), CliError> {
    let stem = format!("inst_{index:04}");
    let map_name = format!("{stem}.map");
    atomic_write(&dir.join(&map_name), &render_map(map))?;
    atomic_write(&dir.join(format!("{stem}.scen")), &render_scenario(sc, &map_name, map))
}
