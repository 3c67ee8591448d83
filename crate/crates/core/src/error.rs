use std::path::PathBuf;

use crate::model::Finding;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or inconsistent input data.
    Data,
    /// A numerical routine failed on otherwise valid input.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}, column {column:?}: cannot parse {value:?} as a number")]
    Value {
        line: u64,
        column: String,
        value: String,
    },

    #[error("panel failed validation: {}", join_findings(.0))]
    Validation(Vec<Finding>),

    #[error("non-positive price {value} for sector {sector} on {date}")]
    Domain {
        date: String,
        sector: String,
        value: f64,
    },

    #[error("company {company:?} references unknown sector {code:?}")]
    UnknownSector { company: String, code: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("sector {sector} has zero variance over the window")]
    DegenerateSeries { sector: String },

    #[error("exponent must be a positive even integer, got {0}")]
    InvalidExponent(u32),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no convergence after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("matrix is reducible ({components} disconnected blocks)")]
    Reducible { components: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing prerequisite artifact {}", .0.display())]
    Dependency(PathBuf),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

fn join_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Convergence { .. }
            | Error::Reducible { .. }
            | Error::Degenerate(_)
            | Error::Numerical(_) => ErrorClass::Numerical,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
