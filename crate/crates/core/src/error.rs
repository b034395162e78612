use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LagpError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("correlation matrix is not positive definite (pivot {pivot} = {value:e})")]
    Singular { pivot: usize, value: f64 },

    #[error("extension is near-singular: schur complement {schur:e} at or below tolerance")]
    NearSingularExtension { schur: f64 },

    #[error("numerical failure at theta = {theta}: {reason}")]
    Numerical { theta: f64, reason: String },

    #[error("all candidates are excluded")]
    ExhaustedCandidates,

    #[error("local design stopped at j = {reached} of {target}: {source}")]
    PartialDesign {
        reached: usize,
        target: usize,
        #[source]
        source: Box<LagpError>,
    },
}

pub type Result<T> = std::result::Result<T, LagpError>;
