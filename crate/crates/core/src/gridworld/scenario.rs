//! movingai `.scen` reader and writer.
//!
//! Line 1 is `version 1`; each following line holds nine tab-separated fields:
//! `bucket map_name map_width map_height start_x start_y goal_x goal_y optimal_length`.

use thiserror::Error;

use super::{AgentTask, Cell, GridMap, Scenario};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("malformed scenario line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("agent {agent}: cell {cell} is out of bounds")]
    OutOfBounds { agent: usize, cell: Cell },

    #[error("agent {agent}: start or goal {cell} is blocked")]
    StartOrGoalBlocked { agent: usize, cell: Cell },

    #[error("scenario lists no agents")]
    NoAgents,
}

pub fn parse_scenario(text: &str, map: &GridMap) -> Result<Scenario, ScenarioError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    match lines.next() {
        Some((_, l)) if l.trim().starts_with("version") => {}
        Some((i, l)) => {
            return Err(ScenarioError::MalformedLine { line: i + 1, reason: format!("expected version header, got {l:?}") })
        }
        None => return Err(ScenarioError::NoAgents),
    }

    let mut agents = Vec::new();
    let mut hints = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let malformed = |reason: String| ScenarioError::MalformedLine { line: lineno, reason };
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        // Tolerate space-separated files as long as the field count works out.
        let fields: Vec<&str> = if fields.len() == 9 { fields } else { line.split_whitespace().collect() };
        if fields.len() != 9 {
            return Err(malformed(format!("expected 9 fields, found {}", fields.len())));
        }
        let num = |k: usize| -> Result<usize, ScenarioError> {
            fields[k].trim().parse::<usize>().map_err(|_| malformed(format!("field {} is not an integer: {:?}", k + 1, fields[k])))
        };
        let (mw, mh) = (num(2)?, num(3)?);
        if mw != map.width() || mh != map.height() {
            return Err(malformed(format!(
                "declared map size {mw}x{mh} differs from map {}x{}",
                map.width(),
                map.height()
            )));
        }
        let start = Cell::new(num(4)?, num(5)?);
        let goal = Cell::new(num(6)?, num(7)?);
        let hint = fields[8]
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| malformed(format!("bad optimal length {:?}", fields[8])))?;
        agents.push(AgentTask { start, goal });
        hints.push(Some(hint));
    }
    Scenario::new(map, agents, hints)
}

/// Writes a scenario in movingai form; missing hints are written as `0`.
pub fn render_scenario(scenario: &Scenario, map_name: &str, map: &GridMap) -> String {
    let mut out = String::from("version 1\n");
    for (task, hint) in scenario.agents.iter().zip(&scenario.optimal_hint) {
        out.push_str(&format!(
            "0\t{map_name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            map.width(),
            map.height(),
            task.start.x,
            task.start.y,
            task.goal.x,
            task.goal.y,
            hint.unwrap_or(0.0)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{parse_map, Terrain};

    #[test]
    fn single_agent() {
        let m = GridMap::open(3, 1);
        let s = parse_scenario("version 1\n0\tm.map\t3\t1\t0\t0\t2\t0\t2\n", &m).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.agents[0], AgentTask { start: Cell::new(0, 0), goal: Cell::new(2, 0) });
        assert_eq!(s.optimal_hint, vec![Some(2.0)]);
    }

    #[test]
    fn blocked_start() {
        let m = parse_map("type octile\nheight 1\nwidth 3\nmap\n@..\n").unwrap();
        let err = parse_scenario("version 1\n0\tm.map\t3\t1\t0\t0\t2\t0\t2\n", &m).unwrap_err();
        assert_eq!(err, ScenarioError::StartOrGoalBlocked { agent: 0, cell: Cell::new(0, 0) });
    }

    #[test]
    fn order_preserved() {
        let m = GridMap::open(4, 4);
        let text = "version 1\n0\tm\t4\t4\t0\t0\t3\t3\t6\n1\tm\t4\t4\t1\t1\t2\t2\t2\n";
        let s = parse_scenario(text, &m).unwrap();
        assert_eq!(s.agents[0].start, Cell::new(0, 0));
        assert_eq!(s.agents[1].start, Cell::new(1, 1));
        assert_eq!(s.optimal_hint, vec![Some(6.0), Some(2.0)]);
    }

    #[test]
    fn errors() {
        let m = GridMap::open(3, 3);
        assert!(matches!(
            parse_scenario("version 1\n0\tm\t3\t3\t0\t0\n", &m),
            Err(ScenarioError::MalformedLine { line: 2, .. })
        ));
        assert!(matches!(
            parse_scenario("version 1\n0\tm\t3\t3\t0\t0\t9\t0\t1\n", &m),
            Err(ScenarioError::OutOfBounds { .. })
        ));
        assert!(matches!(
            parse_scenario("version 1\n0\tm\t4\t3\t0\t0\t1\t0\t1\n", &m),
            Err(ScenarioError::MalformedLine { .. })
        ));
        assert_eq!(parse_scenario("version 1\n", &m), Err(ScenarioError::NoAgents));
    }

    #[test]
    fn render_then_parse() {
        let m = GridMap::new(3, 2, vec![Terrain::Passable; 6]).unwrap();
        let s = Scenario::new(
            &m,
            vec![AgentTask { start: Cell::new(0, 0), goal: Cell::new(2, 1) }],
            vec![Some(3.0)],
        )
        .unwrap();
        assert_eq!(parse_scenario(&render_scenario(&s, "x.map", &m), &m).unwrap(), s);
    }
}
