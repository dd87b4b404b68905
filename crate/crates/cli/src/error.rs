use std::path::PathBuf;

use serde::Serialize;

use clusterda::{Error, Stage};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
    },
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    /// Wraps a library error, keeping the stage it was tagged with if any.
    pub fn at(stage: Stage) -> impl Fn(Error) -> CliError {
        move |e| match e {
            Error::Stage { stage, source } => CliError::Stage { stage, source: *source },
            e => CliError::Stage { stage, source: e },
        }
    }

    pub fn output(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.into(),
            message: e.to_string(),
        }
    }

    pub fn stage_name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Stage { stage, .. } => stage.as_str(),
            CliError::Output { .. } => "output",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            status: &'static str,
            stage: &'a str,
            message: String,
        }
        let message = match self {
            CliError::Stage { source, .. } => source.to_string(),
            e => e.to_string(),
        };
        serde_json::to_string(&Record {
            status: "error",
            stage: self.stage_name(),
            message,
        })
        .expect("error record serializes")
    }
}
