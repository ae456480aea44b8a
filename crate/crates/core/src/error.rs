use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScopeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("grid too coarse or malformed: {0}")]
    InvalidGrid(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("spectral gap ambiguous: eigenvalue {value:e} lies in [{eps:e}, {gap_edge:e}); recalibrate eps_rank or refine the grid")]
    GapAmbiguity { value: f64, eps: f64, gap_edge: f64 },
    #[error("matrix near singular (condition {cond:e})")]
    NearSingular { cond: f64 },
    #[error("reduced operator B(z) not invertible on range(S); the next hierarchy level is needed")]
    BNotInvertible,
    #[error("no admissible lambda0 >= {floor:e}: {detail}")]
    ConditioningFailure { floor: f64, detail: String },
    #[error("rank(S2) = 0, no zero-energy eigenspace")]
    EmptyEigenspace,
    #[error("classification is regular; F_t vanishes")]
    EmptySingularPart,
    #[error("fit window too short: {0}; enlarge L")]
    WindowTooShort(String),
    #[error("evolution unstable: norm drift {0:e}")]
    Unstable(f64),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
}

impl ScopeError {
    /// Exit-code contract: 1 config, 2 gap, 3 conditioning, 4 window, 5 quadrature.
    pub fn exit_code(&self) -> i32 {
        use ScopeError::*;
        match self {
            Config(_) | InvalidGrid(_) | NonFinite(_) => 1,
            GapAmbiguity { .. } => 2,
            NearSingular { .. } | BNotInvertible | ConditioningFailure { .. } | EmptyEigenspace | EmptySingularPart => 3,
            WindowTooShort(_) | Unstable(_) => 4,
            Quadrature(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScopeError>;
