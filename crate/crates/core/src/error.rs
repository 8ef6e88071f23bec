use thiserror::Error;

/// Errors raised by geometry, assembly, solvers and quotient estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no stratum of codimension {0} in the domain")]
    NoSuchStratum(usize),
    #[error("no stratum labelled `{0}`")]
    UnknownStratum(String),
    #[error("point {0:?} is not interior to the domain")]
    OutsideDomain(Vec<f64>),
    #[error("radius {radius} must lie in (0, {beta})")]
    RadiusTooLarge { radius: f64, beta: f64 },
    #[error("weight exponent {alpha} on a codimension-{codim} stratum is not integrable (need > {bound})")]
    NonIntegrableWeight { codim: usize, alpha: f64, bound: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("Hardy constant exceeded: c = {c} > {limit}")]
    HardyConstantExceeded { c: f64, limit: f64 },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("singular sets of the two potentials overlap: {0}")]
    OverlappingSingularities(String),
    #[error("coefficient matrix is not symmetric (asymmetry {0:e})")]
    AsymmetricCoefficient(f64),
    #[error("mesh would need {nodes} nodes, above the cap of {cap}")]
    BudgetExceeded { nodes: usize, cap: usize },
    #[error("nonfinite weight integral on cell {cell}")]
    QuadratureBreakdown { cell: usize },
    #[error("factorization failed at pivot {0}")]
    FactorizationFailed(usize),
    #[error("eigen-iteration did not converge after {0} steps")]
    NotConverged(usize),
    #[error("lowest eigenvalue keeps decreasing under refinement: {0:?}")]
    NotBoundedBelow(Vec<f64>),
    #[error("fit window holds {0} sample radii, need at least 8")]
    WindowTooNarrow(usize),
    #[error("ground state underflows at node {0} where the test function is nonzero")]
    DivisionUnderflow(usize),
    #[error("state became nonfinite at step {0}")]
    NonFiniteState(usize),
    #[error("spectral tail estimate {0:e} exceeds tolerance")]
    TailNotConverged(f64),
    #[error("sample grid is empty")]
    EmptyGrid,
    #[error("sandwich ratio spread {0:e} exceeds 1e6")]
    UnboundedRatio(f64),
    #[error("solution dips to {0:e}, below the positivity tolerance")]
    NonPositiveSolution(f64),
    #[error("minimizer did not converge; best value {0}")]
    NonConvergedMinimizer(f64),
    #[error("exponent {alpha} is the excluded value for codimension {codim}")]
    ExcludedExponent { codim: usize, alpha: f64 },
    #[error("entropy integral is nonfinite for sample {0}")]
    NonFiniteEntropy(usize),
    #[error("test function is identically zero")]
    ZeroDenominator,
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
