use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("scenario `{name}`: {reason}")]
    Scenario { name: String, reason: String },

    #[error(
        "design matrix for {row} is rank deficient (rank {rank} of {columns}); \
         add scenarios with more diverse contact depths and shear directions"
    )]
    RankDeficient {
        row: &'static str,
        rank: usize,
        columns: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed {kind}: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }
}
