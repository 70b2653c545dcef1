use thiserror::Error;

/// Errors raised by the model, the solvers and the scenario layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("queue unstable{}: success probability does not exceed the arrival probability", fmt_link(.link))]
    QueueUnstable { link: Option<usize> },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("no sign change over [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("bracket expansion failed after {doublings} doublings")]
    ExpansionFailed { doublings: usize },

    #[error("linear system is singular")]
    Singular,

    #[error("best response of link {link} is infeasible: {cause}")]
    Infeasible { link: usize, cause: InfeasibleCause },

    #[error("no feasible power vector satisfies every QoS constraint")]
    NoFeasiblePoint,

    #[error("start vector is not feasible: {0}")]
    InfeasibleStart(String),

    #[error("success model violates a required property: {0}")]
    ModelViolation(String),

    #[error("block {block} solver failed: {source}")]
    BlockSolverFailure {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every candidate of block {block} destabilizes some queue")]
    AllCandidatesInfeasible { block: usize },

    #[error("feasible interval of block {block} is empty (floor {floor} > ceiling {ceiling})")]
    EmptyInterval { block: usize, floor: f64, ceiling: f64 },

    #[error("inner solver failed: {0}")]
    InnerSolverFailure(String),

    #[error("denominator is not positive ({0})")]
    NonpositiveDenominator(f64),

    #[error("placement failed: {0}")]
    Placement(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

/// Why a single-link best-response problem has no feasible point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InfeasibleCause {
    /// `alpha - S^-1(theta) * phi <= 0`: the QoS target exceeds what the link can reach at any power.
    DegenerateDenominator,
    /// The minimum power meeting the QoS target exceeds the power budget.
    PowerBudget { p_min: f64, p_max: f64 },
    /// No power in the budget keeps the transmit queue stable.
    QueueStability { p_floor: f64, p_max: f64 },
}

impl std::fmt::Display for InfeasibleCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfeasibleCause::DegenerateDenominator => {
                write!(f, "QoS target unreachable (self-interference ceiling)")
            }
            InfeasibleCause::PowerBudget { p_min, p_max } => {
                write!(f, "minimum power {p_min:e} W exceeds budget {p_max:e} W")
            }
            InfeasibleCause::QueueStability { p_floor, p_max } => {
                write!(f, "queue-stability power {p_floor:e} W exceeds budget {p_max:e} W")
            }
        }
    }
}

fn fmt_link(link: &Option<usize>) -> String {
    link.map(|k| format!(" on link {k}")).unwrap_or_default()
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}
