use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced by the core crate.
///
/// The variants separate caller mistakes (`Shape`, `Usage`, `Config`) from
/// inconsistent mutable state (`State`) and from numeric blow-ups detected
/// during training updates (`NonFinite`).
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand dimensions that do not line up. Reports both shapes so the
    /// message is actionable without a debugger.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An API was called outside its contract (stepping a finished episode,
    /// backward through a node that is not in the graph, ...).
    Usage(&'static str),
    /// A configuration value is invalid or an identifier is unknown.
    Config(String),
    /// Mutable state no longer matches its owner, e.g. optimizer moments
    /// built for a different parameter set.
    State(String),
    /// A training update produced NaN or infinity.
    NonFinite(&'static str),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape { op, lhs, rhs } => {
                write!(f, "shape mismatch in {op}: {lhs:?} vs {rhs:?}")
            }
            CoreError::Usage(msg) => write!(f, "usage error: {msg}"),
            CoreError::Config(msg) => write!(f, "config error: {msg}"),
            CoreError::State(msg) => write!(f, "state error: {msg}"),
            CoreError::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for CoreError {}
