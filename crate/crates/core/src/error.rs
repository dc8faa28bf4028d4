use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("a map needs at least one factor")]
    EmptyFactors,
    #[error("factor {index}: polynomial degree {degree} is below 2")]
    DegreeTooLow { index: usize, degree: usize },
    #[error("factor {index}: perturbation degree {b_degree} exceeds deg p - 1 = {max}")]
    PerturbationDegree {
        index: usize,
        b_degree: usize,
        max: usize,
    },
    #[error("factor {index}: coefficient a vanishes, the factor is not invertible")]
    SingularFactor { index: usize },
    #[error("inverse is undefined: a + b(z) = {modulus:e} in modulus")]
    Indeterminacy { modulus: f64 },
    #[error("orbit left the bidisk without entering the escape region within the budget")]
    Unresolved,
    #[error("Böttcher correction {correction_modulus:.3} at stage {stage} leaves the principal branch disk")]
    Branch {
        stage: usize,
        correction_modulus: f64,
    },
    #[error("contour passes within {distance:e} of a zero")]
    ContourThroughZero { distance: f64 },
    #[error("boundary of the transversal has not escaped by iterate {n}")]
    NonHorizontal { n: usize },
    #[error("zeros cannot be separated at working precision near t = {re} + {im}i")]
    ZeroCluster { re: f64, im: f64 },
    #[error("resonance: lambda^{order} coincides with an eigenvalue")]
    Resonance { order: usize },
    #[error("periodic orbit is not a saddle")]
    NotASaddle,
    #[error("no crossing of level {level} found on the leaf chart")]
    LevelNotFound { level: f64 },
    #[error("level curve {level} runs into a critical point of the potential")]
    CriticalLevel { level: f64 },
    #[error("empty measure")]
    EmptyMeasure,
    #[error("no saddle orbits found")]
    EmptySet,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
