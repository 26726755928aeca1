use thiserror::Error;

/// Errors surfaced by functional evaluation, factorization and the
/// transformation formulas.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("divisor magnitude {value:.3e} below tolerance {tol:.3e} at a support point")]
    DivisorNearZero { value: f64, tol: f64 },

    #[error("requested degree {requested} exceeds the representable maximum {max}")]
    DegreeOverflow { requested: usize, max: usize },

    #[error("pole at distance {dist:.3e} from a quadrature node (tolerance {tol:.3e})")]
    PoleOnSupport { dist: f64, tol: f64 },

    #[error("leading minor at block level {0} is numerically singular")]
    SingularMinor(usize),

    #[error("pivot block of a quasi-determinant is numerically singular")]
    SingularBlock,

    #[error("no poised column/node selection found at level {level} (best condition {best_cond:.3e})")]
    NoPoisedSet { level: usize, best_cond: f64 },

    #[error("node {index} lies off the zero set of q1: |q1(p)| = {value:.3e}")]
    NodeOffVariety { index: usize, value: f64 },

    #[error("polynomial has a repeated root near {re:.6}+{im:.6}i; multiplicities are unsupported here")]
    RepeatedRoots { re: f64, im: f64 },

    #[error("perturbation system matrix is singular (quasi-definiteness of the perturbed functional fails)")]
    SingularSystem,

    #[error("series tail {tail:.3e} not below {target:.3e} at radius {radius:.3e}")]
    NonConvergentSeries { tail: f64, target: f64, radius: f64 },

    #[error("generator violates the declared invariance: residual {residual:.3e}")]
    InvarianceViolated { residual: f64 },

    #[error("polynomial division by q1 left a remainder of size {remainder:.3e}")]
    DivisionRemainder { remainder: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
