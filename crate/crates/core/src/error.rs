use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shift ({u}, {v}) exceeds margin {margin}")]
    ShiftExceedsMargin { u: i64, v: i64, margin: usize },

    #[error("angle {theta_deg} deg is outside the open interval (-90, 90)")]
    AngleDomain { theta_deg: f64 },

    #[error("offset {offset_um} um is at or beyond the limiting offset {max_um} um")]
    OffsetDomain { offset_um: f64, max_um: f64 },

    #[error("view index {index} out of range 1..={count}")]
    ViewIndex { index: usize, count: usize },

    #[error("non-finite value at iteration {iteration}: {what}")]
    NonFinite {
        iteration: usize,
        what: &'static str,
    },

    #[error("combo {combo} needed at pixel ({row}, {col}) is missing from the cache")]
    MissingCombo {
        combo: String,
        row: usize,
        col: usize,
    },

    #[error("{0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
