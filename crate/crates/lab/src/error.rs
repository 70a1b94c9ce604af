use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] haptolab_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),

    #[error("{what}, line {line}: {msg}")]
    Format { what: &'static str, line: usize, msg: String },

    #[error("unbalanced design: {0}; rebalance or subsample")]
    Unbalanced(String),

    #[error("within-group scatter matrix is singular")]
    SingularScatter,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("pooled standard deviation is zero")]
    ZeroPooledSd,

    #[error("not enough data: {0}")]
    Insufficient(String),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

pub(crate) fn format_err(what: &'static str, line: usize, msg: impl Into<String>) -> Error {
    Error::Format { what, line, msg: msg.into() }
}
