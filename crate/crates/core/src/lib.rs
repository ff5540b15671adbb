//! Unitary-induced quantum channels at finite dimension.
//!
//! Two parties share a system `AB` and each owns an `n`-dimensional ancilla
//! (`A'` and `B'`). Alice couples `A'` to her half through a unitary `U^x`, Bob
//! couples his half to `B'` through `V^y`, and tracing out the shared system
//! leaves a channel `Λ_xy` on `A'B'`. This crate builds those channels for
//! tensor-product and commuting-operator models, recomputes them from the
//! table of moments `φ(u_ij u*_lk ⊗ v_pr v*_ts)`, and maps channel families to
//! Bell behaviours through the Fourier construction on two-outcome (or
//! `n`-outcome) projective measurements.
//!
//! Modules:
//!
//! - [`matcore`]: dense complex matrices, register bookkeeping, eigensolver, Haar sampling.
//! - [`models`]: PVM families, tensor and commuting models, embeddings and lifts.
//! - [`channels`]: direct and moment-based channel construction, Choi audits.
//! - [`bell`]: Fourier coefficients, behaviour extraction, Bell functionals.
//! - [`seesaw`]: alternating Bell-functional maximization over tensor strategies.
//!
//! Indices are 0-based in code. Outcome and setting labels that appear in
//! formulas (e.g. the Fourier phases) are shifted to 1-based where the
//! arithmetic depends on them.

#![forbid(unsafe_code)]
#![allow(clippy::needless_range_loop)]

pub mod bell;
pub mod channels;
pub mod matcore;
pub mod models;
pub mod seesaw;

pub use matcore::{ComplexMatrix, RegisterDims, C64};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid register permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("matrix is not hermitian (defect {defect:.3e} > {tol:.3e})")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("not a quantum state: {0}")]
    NotAState(String),

    #[error("moment table is not conjugate-symmetric (defect {0:.3e})")]
    AsymmetricMoments(f64),

    #[error("inconsistent channel: imaginary residue {0:.3e} in extracted behaviour")]
    InconsistentChannel(f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("ancilla dimension {n} exceeds the limit {limit} (raise UICHAN_MAX_N to override)")]
    AncillaTooLarge { n: usize, limit: usize },

    #[error("pipeline inconsistency: {0}")]
    PipelineInconsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
