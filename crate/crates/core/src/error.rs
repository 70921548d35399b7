use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by how a command-line caller should react; see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error ({context}): {message}")]
    Parse { context: String, message: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("words missing from vocabulary: {}", .0.join(", "))]
    MissingWords(Vec<String>),

    #[error("word '{0}' has zero unigram probability")]
    ZeroMarginal(String),

    #[error("log of zero: P_ij = 0 for pair ({0}, {1}) with eps = 0")]
    LogOfZero(String, String),

    #[error("incompatible tables: {0}")]
    Incompatible(String),

    #[error("size guard exceeded: {what} needs {requested}, limit is {limit}")]
    SizeGuard {
        what: String,
        requested: usize,
        limit: usize,
    },

    #[error("modulation too strong: K({separation}) = {value} makes 1 + K <= 0")]
    ModulationTooStrong { separation: f64, value: f64 },

    #[error("matrix is not circulant: max deviation {0:e}")]
    NotCirculant(f64),

    #[error("rank too small for bound: {0}")]
    RankTooSmall(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
        /// Manifest entries (path, sha256) of the stages that completed.
        completed: Vec<(String, String)>,
    },
}

impl Error {
    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Dimension(_) | Error::SizeGuard { .. } => 1,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyCorpus(_)
            | Error::MissingWords(_)
            | Error::ZeroMarginal(_)
            | Error::LogOfZero(..)
            | Error::Incompatible(_)
            | Error::NotCirculant(_) => 2,
            Error::ModulationTooStrong { .. } | Error::RankTooSmall(_) | Error::Numerical(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_errors_inherit_exit_code() {
        let inner = Error::Numerical("eigensolver".into());
        let e = Error::Stage {
            stage: "embed".into(),
            source: Box::new(inner),
            completed: vec![],
        };
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("embed"));
    }

    #[test]
    fn missing_words_are_listed() {
        let e = Error::MissingWords(vec!["may".into(), "june".into()]);
        assert_eq!(e.to_string(), "words missing from vocabulary: may, june");
        assert_eq!(e.exit_code(), 2);
    }
}
