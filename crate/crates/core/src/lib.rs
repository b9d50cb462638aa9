//! Orthogonal Matching Pursuit for noisy sparse recovery, with exact
//! restricted-isometry certification and numerical checks of the recovery
//! conditions.
//!
//! - [`sensing`]: sensing matrices, coherence, exact `delta_K`, least squares.
//! - [`omp`]: the solver and its stopping rules.
//! - [`guarantees`]: closed-form recovery thresholds.
//! - [`oracle`]: exhaustive best-support search and lemma witnesses.
//! - [`harness`]: Monte Carlo experiments and their CSV/JSON output.

// Negated comparisons such as `!(x <= tol)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod guarantees;
pub mod harness;
pub mod io;
pub mod omp;
pub mod oracle;
pub mod seed;
pub mod sensing;
pub mod signal;

pub use error::{Error, Result};
pub use guarantees::{evaluate_guarantees, DeltaSource, GuaranteeReport, NoiseSpec};
pub use omp::{omp_run, HaltReason, OmpTrace, StoppingRule};
pub use sensing::{rip_exact, CoherenceValue, RipCertificate, SenseMatrix};
pub use signal::SparseSignal;
