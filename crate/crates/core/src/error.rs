use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("job set failed validation: {}", fmt_violations(.0))]
    Validation(Vec<Violation>),

    #[error("job {job} reached its deadline with {remaining} unserved demand under a strict policy")]
    StrictViolation { job: usize, remaining: f64 },

    #[error("job {job} is infeasible: demand {demand} exceeds its service window {window}")]
    Infeasible { job: usize, demand: f64, window: f64 },

    #[error("class {class} cannot be scheduled inside [{t1}, {t2}): {reason}")]
    Stranded {
        class: usize,
        t1: f64,
        t2: f64,
        reason: String,
    },

    #[error("empty measurement window")]
    EmptyWindow,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(8).map(|x| x.to_string()).collect();
    let mut s = shown.join("; ");
    if v.len() > 8 {
        s.push_str(&format!("; ... ({} total)", v.len()));
    }
    s
}
