//! Simulator and certification toolkit for a parallel self-testing protocol
//! with device-independent remote state preparation.
//!
//! A verifier (Alice's side is trusted only as a question/answer interface)
//! plays `n` parallel CHSH-style games against two devices sharing an
//! alleged `n`-fold EPR state. The toolkit provides:
//!
//! * [`linalg`] — dense complex operators/states over labeled register
//!   layouts, a self-contained Hermitian eigensolver, norms, distances and
//!   the unitary regularization used by the extraction argument;
//! * [`quantum`] — qubit bases (x, y, z, x±y), eigenstates, Bell states and
//!   Born-rule helpers;
//! * [`questions`] — the combinatorial question sets of the protocol
//!   (base set, special questions, reduced and per-position sets);
//! * [`strategy`] — device strategies: the reference (honest) strategy, its
//!   depolarized and globally-conjugated variants, and arbitrary dense
//!   strategies loaded from files;
//! * [`verifier`] — exact and empirical evaluation of the acceptance
//!   correlations (triple CHSH, perfect correlations, conjugation checks)
//!   and the sum-of-squares residual decomposition;
//! * [`selftest`] — the algebraic relations extracted from a near-optimal
//!   strategy and the explicit swap/kickback isometry with its junk states;
//! * [`prepare`] — remote state preparation: post-measurement states pushed
//!   through the extraction isometry, compared against the ideal targets,
//!   plus the probabilistic trace-distance tail bound.
//!
//! Conventions used throughout: qubit bases are labeled `1..=5` for
//! x, y, z, x+y, x−y; binary outcomes are ±1; the maximal triple-CHSH score
//! is `6√2`; register layouts are ordered lists of labeled subsystems with
//! row-major (first register = most significant) indexing.

pub mod linalg;
pub mod prepare;
pub mod quantum;
pub mod questions;
pub mod selftest;
pub mod strategy;
pub mod verifier;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be square is not.
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    /// Operand dimensions do not match.
    #[error("dimension mismatch: {left} vs {right} ({context})")]
    DimensionMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },
    /// Two states live on different register layouts.
    #[error("register layout mismatch ({context})")]
    LayoutMismatch { context: &'static str },
    /// A register was not found in a layout.
    #[error("register {0} not present in layout")]
    UnknownRegister(String),
    /// An operator flagged or required to be Hermitian is not.
    #[error("operator is not Hermitian (max deviation {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },
    /// An operator flagged as unitary is not.
    #[error("operator is not unitary (max deviation {max_dev:.3e})")]
    NotUnitary { max_dev: f64 },
    /// An operator family flagged as projective is not.
    #[error("projector family invalid: {context} (max deviation {max_dev:.3e})")]
    NotProjective { context: String, max_dev: f64 },
    /// A state that must be normalized is not.
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    /// Invalid basis label (valid: 1..=5).
    #[error("invalid basis label {0} (expected 1..=5)")]
    InvalidBasis(u8),
    /// Invalid question string.
    #[error("invalid question {question:?}: {reason}")]
    InvalidQuestion {
        question: String,
        reason: &'static str,
    },
    /// A question is outside a strategy's declared domain.
    #[error("question {0:?} not in strategy domain")]
    QuestionNotInDomain(String),
    /// The dense strategy path is capped at small n.
    #[error("dense strategy path supports n <= {cap}, got n = {n}")]
    DenseTooLarge { n: usize, cap: usize },
    /// Bell-pair questions are undefined for a single game.
    #[error("Bell-pair question {0} is undefined at n = 1")]
    NoBellPairs(String),
    /// The empirical estimator is missing trial cells.
    #[error("missing trial cells for {missing} correlator(s); first: {first}")]
    MissingCells { missing: usize, first: String },
    /// An outcome has (numerically) zero probability.
    #[error("outcome {outcome} has probability {prob:.3e}, below cutoff")]
    ZeroProbability { outcome: String, prob: f64 },
    /// Malformed strategy/question file.
    #[error("malformed file: {0}")]
    MalformedFile(String),
    /// Numerical routine failed to converge.
    #[error("{routine} failed to converge after {iterations} iteration(s)")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },
    /// I/O error.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// JSON (de)serialization error.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub use linalg::{Layout, Operator, Register, StateVector};
pub use quantum::{Basis, Outcome};
pub use questions::{Question, QuestionSet};
pub use strategy::{BobAnswer, BobQuestion, NoiseKind, NoiseSpec, Strategy};

/// Default numerical tolerance for exact-model assertions.
pub const TOL: f64 = 1e-9;
/// Tolerance for Hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Eigenvalue magnitude below which a direction counts as kernel during
/// regularization.
pub const KERNEL_THRESHOLD: f64 = 1e-10;
/// Maximal number of games supported by the dense strategy path.
pub const DENSE_N_CAP: usize = 3;
/// The quantum maximum of the triple CHSH expression.
pub fn chsh_max() -> f64 {
    6.0 * std::f64::consts::SQRT_2
}
/// The classical (local hidden variable) bound of the triple CHSH expression.
pub const CHSH_CLASSICAL: f64 = 6.0;
