use thiserror::Error;

/// Faults raised while advancing a simulation. Each carries the simulation
/// time at which the offending state was detected, before any nonfinite
/// value can propagate.
#[derive(Debug, Clone, PartialEq)]
pub enum Fault {
    /// A mass denominator dropped to or below the vacuum guard threshold.
    Vacuum {
        t: f64,
        /// Smallest denominator value found on the grid.
        value: f64,
        /// Physical coordinates of the minimizing grid point.
        location: Vec<f64>,
    },
    /// A sup-norm left the window on which the modified-variable chart is valid.
    Admissibility {
        t: f64,
        field: &'static str,
        norm: f64,
        bound: f64,
    },
    /// The configured step size exceeds the stability bound for the current state.
    CflViolation { t: f64, dt: f64, bound: f64 },
    /// A nonfinite sample appeared in the state.
    NonFinite { t: f64, field: &'static str },
    /// A square-root argument in a pressure kernel lost positivity.
    NegativeRadicand { t: f64, value: f64 },
}

impl Fault {
    /// The simulation time stored in the fault.
    pub fn time(&self) -> f64 {
        match self {
            Fault::Vacuum { t, .. }
            | Fault::Admissibility { t, .. }
            | Fault::CflViolation { t, .. }
            | Fault::NonFinite { t, .. }
            | Fault::NegativeRadicand { t, .. } => *t,
        }
    }

    /// The same fault restamped with the given simulation time. Used by the
    /// time loop, which knows the current time while the operator that
    /// detected the fault does not.
    pub fn with_time(mut self, time: f64) -> Fault {
        match &mut self {
            Fault::Vacuum { t, .. }
            | Fault::Admissibility { t, .. }
            | Fault::CflViolation { t, .. }
            | Fault::NonFinite { t, .. }
            | Fault::NegativeRadicand { t, .. } => *t = time,
        }
        self
    }
}

impl std::fmt::Display for Fault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fault::Vacuum { t, value, location } => write!(
                f,
                "vacuum fault at t = {t}: denominator {value:.3e} at x = {location:?}"
            ),
            Fault::Admissibility { t, field, norm, bound } => write!(
                f,
                "admissibility fault at t = {t}: sup |{field}| = {norm:.6e} exceeds {bound:.6e}"
            ),
            Fault::CflViolation { t, dt, bound } => write!(
                f,
                "step-size fault at t = {t}: dt = {dt:.3e} exceeds stability bound {bound:.3e}"
            ),
            Fault::NonFinite { t, field } => {
                write!(f, "nonfinite value in field {field} at t = {t}")
            }
            Fault::NegativeRadicand { t, value } => {
                write!(f, "nonpositive kernel radicand {value:.3e} at t = {t}")
            }
        }
    }
}

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("state is in chart {found}, operation requires {expected}")]
    ChartMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("operand has wrong arity: {0}")]
    ArityMismatch(String),

    #[error("initial data recipe rejected: {0}")]
    Recipe(String),

    #[error("estimate cannot be formed: {0}")]
    Estimate(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("{0}")]
    Solver(Fault),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
