//! Plain-text checkpoint files.
//!
//! ```text
//! hpl-checkpoint 1
//! meta <key> <value>          (zero or more)
//! tensor <name> <d0>x<d1>...
//! <values, space separated>
//! ...
//! ```
//!
//! Keys and names contain no whitespace; a meta value runs to the end of its
//! line. Values use Rust's shortest round-trip float formatting, so a
//! save/load cycle is lossless.

use std::collections::BTreeMap;

use thiserror::Error;

use super::Tensor;

const MAGIC: &str = "hpl-checkpoint 1";

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (missing `{MAGIC}` header)")]
    BadHeader,

    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("missing meta key {0:?}")]
    MissingMeta(String),

    #[error("meta key {key:?} has unparsable value {value:?}")]
    BadMeta { key: String, value: String },

    #[error("checkpoint tensors do not match the model: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(tensors: Vec<(String, Tensor)>) -> Self {
        Self { meta: BTreeMap::new(), tensors }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        let value = self.meta.get(key).ok_or_else(|| CheckpointError::MissingMeta(key.to_string()))?;
        value.parse().map_err(|_| CheckpointError::BadMeta { key: key.to_string(), value: value.clone() })
    }

    pub fn render(&self) -> String {
        let mut out = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            out.push_str(&format!("tensor {name} {}\n", dims.join("x")));
            let vals: Vec<String> = t.values().iter().map(f64::to_string).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(CheckpointError::BadHeader),
        }
        let mut ck = Checkpoint::default();
        while let Some((i, line)) = lines.next() {
            let lineno = i + 1;
            let bad = |reason: &str| CheckpointError::Malformed { line: lineno, reason: reason.to_string() };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').ok_or_else(|| bad("meta needs key and value"))?;
                ck.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let mut parts = rest.split_whitespace();
                let (Some(name), Some(dims), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(bad("expected `tensor <name> <shape>`"));
                };
                let shape = dims
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad("bad shape"))?;
                let (_, vline) = lines.next().ok_or_else(|| bad("missing value line"))?;
                let values = vline
                    .split_whitespace()
                    .map(str::parse::<f64>)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad("bad value"))?;
                let t = Tensor::new(shape, values).map_err(|e| bad(&e.to_string()))?;
                ck.tensors.push((name.to_string(), t));
            } else {
                return Err(bad("expected `meta` or `tensor` record"));
            }
        }
        Ok(ck)
    }
}
