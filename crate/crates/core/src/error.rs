use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("training of {model} diverged at epoch {epoch} (loss is not finite)")]
    Divergence { model: String, epoch: usize },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps `self` with the pipeline stage that produced it.
    pub fn at(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit status: 2 for bad input data, 3 for bad configuration,
    /// 4 for training divergence, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { stage, source } => match source.exit_code() {
                1 if stage == "load" || stage == "checkpoint" => 2,
                code => code,
            },
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Ingestion(_)
            | Error::Stratification(_)
            | Error::Checkpoint(_)
            | Error::Csv(_) => 2,
            Error::Config(_) => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
