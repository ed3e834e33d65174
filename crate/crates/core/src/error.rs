use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("weight {value} at position {index} is negative or not finite")]
    InvalidWeight { index: usize, value: f64 },

    #[error("response {value} at position {index} is not a valid bernoulli outcome (expected 0 or 1)")]
    InvalidResponse { index: usize, value: f64 },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("IRLS did not converge after {iterations} iterations (score max-norm {score_norm:e})")]
    NonConvergence { iterations: usize, score_norm: f64 },

    #[error("separation detected: coefficient {index} reached {value:.3} (fitted probabilities pinned at 0 or 1)")]
    Separation { index: usize, value: f64 },

    #[error("design matrix is singular on the support of positive weights")]
    SingularDesign,

    #[error("information matrix is singular; sandwich covariance undefined")]
    SingularInformation,

    #[error("category {0} has positive target share but no support in the source population")]
    UnsupportedPopulation(i64),

    #[error("degenerate propensity {value} for subject at position {index}")]
    DegeneratePropensity { index: usize, value: f64 },

    #[error("invalid trim bounds [{lower}, {upper}]: need 0 < lower < upper")]
    InvalidBounds { lower: f64, upper: f64 },

    #[error("degenerate stratification: {0}")]
    DegenerateStratification(String),

    #[error("estimate at the boundary: {0}")]
    Boundary(String),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("bootstrap unstable: {failed} of {total} replicates failed ({fraction:.1}% > 5%)", fraction = 100.0 * *failed as f64 / *total as f64)]
    UnstableBootstrap { failed: usize, total: usize },
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Separation { .. }
                | Error::SingularDesign
                | Error::SingularInformation
                | Error::DegeneratePropensity { .. }
                | Error::DegenerateStratification(_)
                | Error::Boundary(_)
                | Error::ZeroWeights
                | Error::UnstableBootstrap { .. }
        )
    }
}
