use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

/// Every failure the numeric core can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes or indices that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument outside its admissible domain (non-positive variance, too few samples...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Node strength too close to zero for the disparity ratio to be meaningful.
    #[error("ill-conditioned disparity at layer {layer}, node {node}: |s| = {strength:e} <= {epsilon:e}")]
    IllConditionedDisparity {
        layer: usize,
        node: usize,
        strength: f64,
        epsilon: f64,
    },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
