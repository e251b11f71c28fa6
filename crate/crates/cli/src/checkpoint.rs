//! Plain-text parameter checkpoints.
//!
//! Layout: a header line, then per tensor a `name rank dims...` line and a
//! line of values printed with 17 significant digits, which round-trips
//! every finite `f64` exactly.

use hyperql::nn::ParamSet;
use hyperql::tensor::Tensor;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

const HEADER: &str = "hyperql-checkpoint 1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint has no tensor `{0}`")]
    Missing(String),
    #[error("tensor `{name}`: expected shape {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn to_text(params: &ParamSet) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for e in params.iter() {
        let shape = e.tensor.shape();
        let _ = write!(out, "{} {}", e.name, shape.len());
        for d in shape {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        let vals: Vec<String> = e.tensor.data().iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

fn parse(text: &str) -> Result<BTreeMap<String, Tensor>, CheckpointError> {
    let err = |line: usize, msg: &str| CheckpointError::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(err(1, "missing header")),
    }
    let mut out = BTreeMap::new();
    while let Some((i, head)) = lines.next() {
        let mut parts = head.split_whitespace();
        let name = parts.next().ok_or_else(|| err(i + 1, "empty tensor header"))?;
        let rank: usize = parts
            .next()
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| err(i + 1, "bad rank"))?;
        let shape: Vec<usize> = parts
            .map(|d| d.parse().map_err(|_| err(i + 1, "bad dimension")))
            .collect::<Result<_, _>>()?;
        if shape.len() != rank {
            return Err(err(i + 1, "rank does not match dimensions"));
        }
        let (j, body) = lines.next().unwrap_or((i + 1, ""));
        let data: Vec<f64> = body
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| err(j + 1, "bad value")))
            .collect::<Result<_, _>>()?;
        let t = Tensor::new(shape, data).map_err(|e| err(j + 1, &e.to_string()))?;
        out.insert(name.to_string(), t);
    }
    Ok(out)
}

/// Fills `params` from checkpoint text; names and shapes must match.
pub fn from_text(params: &mut ParamSet, text: &str) -> Result<(), CheckpointError> {
    let stored = parse(text)?;
    for e in params.iter_mut() {
        let t = stored
            .get(&e.name)
            .ok_or_else(|| CheckpointError::Missing(e.name.clone()))?;
        if t.shape() != e.tensor.shape() {
            return Err(CheckpointError::Shape {
                name: e.name.clone(),
                expected: e.tensor.shape().to_vec(),
                found: t.shape().to_vec(),
            });
        }
        e.tensor = t.clone();
    }
    Ok(())
}

pub fn save(params: &ParamSet, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, to_text(params))?;
    Ok(())
}

pub fn load(params: &mut ParamSet, path: &Path) -> Result<(), CheckpointError> {
    from_text(params, &std::fs::read_to_string(path)?)
}
