use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no interest points detected: {0}")]
    EmptyDetection(String),

    #[error("unknown prompt `{0}`: no color key registered")]
    UnknownPrompt(String),

    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("label out of range: {0}")]
    LabelRange(String),

    #[error("unmapped label {0}")]
    UnmappedLabel(u8),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("training failed: {0}")]
    Training(String),

    #[error("no prompts produced: {0}")]
    EmptyPrompt(String),

    #[error("segmentation failed: {0}")]
    Segmentation(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid scene spec: {0}")]
    Spec(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("backend `{name}` unavailable: {reason}")]
    BackendUnavailable { name: String, reason: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps the error with a description of the job step that failed.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by configuration or input files rather than by
    /// the pipeline itself. The CLI maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            Error::Config(_)
                | Error::MissingFile(_)
                | Error::Toml(_)
                | Error::BackendUnavailable { .. }
                | Error::Checkpoint(_)
        )
    }
}
