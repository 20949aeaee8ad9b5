use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing artifact {path}: run `{stage}` first")]
    MissingArtifact { stage: &'static str, path: String },
    #[error("{0}")]
    Usage(String),
    #[error("metric {0} is not finite")]
    NonFiniteMetric(String),
    #[error("malformed artifact {path}: {message}")]
    Format { path: String, message: String },
}
