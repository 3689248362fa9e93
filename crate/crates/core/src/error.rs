use thiserror::Error;

/// Errors produced by the geometry, solver and index pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point is not on Lagrangian {label}: distance {distance:.3e}")]
    NotOnLagrangian { label: usize, distance: f64 },

    #[error("projection onto Lagrangian {label} is ill-posed: distance {distance:.3e}, eigenvalue margin {margin:.3e}")]
    ProjectionIllPosed { label: usize, distance: f64, margin: f64 },

    #[error("non-transverse pair: {0}")]
    NonTransverse(String),

    #[error("infeasible mesh parameters: {0}")]
    InfeasibleMesh(String),

    #[error("inadmissible map: {0}")]
    Inadmissible(String),

    #[error("sampling density too low: {0}")]
    SamplingDensity(String),

    #[error("loop does not close: winding {winding:.4} is not within 0.1 of an integer")]
    Closure { winding: f64 },

    #[error("corner normalization failed at marked point {corner}: {reason}")]
    CornerNormalization { corner: usize, reason: String },

    #[error("symbol truncation error: tail energy fraction {tail:.3e} beyond N = {order}")]
    Truncation { tail: f64, order: usize },

    #[error("symbol is not invertible on the circle: {0}")]
    SingularSymbol(String),

    #[error("indeterminate rank at shift {shift}: {detail}; retry with a larger truncation order N")]
    IndeterminateRank { shift: i64, detail: String },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("stage `{stage}` failed: {source}. hint: {hint}")]
    Stage {
        stage: &'static str,
        hint: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str, hint: &'static str) -> Error {
        Error::Stage {
            stage,
            hint,
            source: Box::new(self),
        }
    }
}
