use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("subshift is empty after pruning dead symbols")]
    EmptySubshift,
    #[error("subshift is not transitive (transition graph has {components} strongly connected components)")]
    NotTransitive { components: usize },
    #[error("word count {count} exceeds cap {cap}")]
    LengthOverflow { count: u128, cap: u128 },
    #[error("search exhausted: {detail}")]
    SearchExhausted { detail: String },
    #[error("no marker word of length {n} (examined {examined} candidates)")]
    NoMarker { n: usize, examined: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate orthonormalization: {0}")]
    Degenerate(String),
    #[error("not converged after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("points are not in the same local {side} set")]
    NotComparable { side: String },
    #[error("ill-conditioned eigenstructure: {0}")]
    IllConditioned(String),

    #[error("invalid model: {clause}")]
    InvalidModel { clause: String },
    #[error("hypothesis fails: {which} (margin {margin:.6})")]
    HypothesisFails { which: String, margin: f64 },
    #[error("plaque hit bound violated: count {count} > {bound}")]
    BoundViolated { count: u64, bound: u64 },
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),
    #[error("resolution not reached: {0}")]
    ResolutionExceeded(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("enumeration cap exceeded: {count} > {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("recurrent set not certified: {0}")]
    NotCertified(String),
    #[error("tolerance not reached: box diameter {diameter:.3e} > {tol:.3e}")]
    ToleranceNotReached { diameter: f64, tol: f64 },

    #[error("admissibility violated: eta {eta:.3e} >= bound {bound:.3e}")]
    AdmissibilityViolated { eta: f64, bound: f64 },
    #[error("not an orbit: residual {residual:.3e} at index {index}")]
    NotAnOrbit { index: i64, residual: f64 },
    #[error("inadmissible word: {0}")]
    InadmissibleWord(String),
    #[error("gap {gap:.3e} exceeds {eps0:.3e} between blocks {at}")]
    GapTooLarge { gap: f64, eps0: f64, at: usize },

    #[error("cardinality shortfall: {achieved} <= {required:.3}")]
    CardinalityShortfall { achieved: usize, required: f64, attrition: Vec<(String, usize)> },
    #[error("separation failure: {0}")]
    SeparationFailure(String),

    #[error("postcondition violated: {0}")]
    PostconditionViolated(String),
}
