//! Error type shared across the toolkit.

use std::fmt;

/// Errors produced by the numerical kernels, maintainers and solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A Gram matrix (or other matrix required to be SPD) failed to factor.
    RankDeficient(&'static str),
    /// A linear system inside a low-rank update could not be solved.
    SingularSystem(&'static str),
    /// Vector/matrix dimensions do not agree.
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// A caller-supplied argument is out of range.
    InvalidArgument(String),
    /// An update sequence violates the per-action size conditions.
    AssumptionViolated(String),
    /// A structural operation would leave the system underdetermined
    /// (e.g. deleting a row so that fewer rows than columns remain).
    Structural(String),
    /// Geometric degeneracy in the cutting-plane driver.
    Degenerate(String),
    /// A separation or subgradient oracle broke its contract.
    Protocol(String),
    /// A linear program was infeasible where feasibility is guaranteed.
    Infeasible(String),
    /// An iteration budget ran out without producing any usable point.
    BudgetExhausted(String),
    /// A function evaluation produced a non-finite value.
    Eval(String),
    /// I/O failure in the command harness.
    Io(String),
    /// Malformed instance or config file.
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::RankDeficient(ctx) => write!(f, "rank deficient matrix in {ctx}"),
            Error::SingularSystem(ctx) => write!(f, "singular linear system in {ctx}"),
            Error::DimensionMismatch {
                context,
                expected,
                got,
            } => {
                write!(
                    f,
                    "dimension mismatch in {context}: expected {expected}, got {got}"
                )
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::AssumptionViolated(msg) => write!(f, "update assumption violated: {msg}"),
            Error::Structural(msg) => write!(f, "structural error: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate geometry: {msg}"),
            Error::Protocol(msg) => write!(f, "oracle protocol violation: {msg}"),
            Error::Infeasible(msg) => write!(f, "infeasible program: {msg}"),
            Error::BudgetExhausted(msg) => write!(f, "budget exhausted: {msg}"),
            Error::Eval(msg) => write!(f, "evaluation error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
