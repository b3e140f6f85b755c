//! Operator-valued positive-definite kernels over a finite index set.
//!
//! A kernel `K: S × S → B(H)` is stored as an [`OperatorKernelTable`]: an
//! `n × n` table of `d × d` complex blocks over an ordered [`LabelSet`], with
//! `H = ℂ^d`. Everything else is built on the flattened scalar Gram matrix of
//! the kernel `K̃((s,a),(t,b)) = ⟨a, K(s,t) b⟩`:
//!
//! - [`kernel`]: flattening, positivity and ordering tests, and a small zoo of
//!   builders (contraction kernels, Neumann series, random Gram kernels).
//! - [`dilation`]: the factorization `K(s,t) = V(s)* V(t)` through the
//!   minimal dilation space, with the reproducing and projection identities.
//! - [`transfer`]: partial-isometry realizations and transfer functions for
//!   systems of signed kernels, plus Radon–Nikodym derivatives `dL/dK`.
//! - [`gaussian`]: seeded `H`-valued Gaussian processes, joint processes from
//!   block kernels, and Gaussian conditioning.
//! - [`regression`]: operator-valued kernel ridge regression and the matching
//!   Gaussian-process posterior mean.
//!
//! Inner products are linear in the second argument throughout.

pub mod dilation;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod transfer;

pub use dilation::{DilationVector, FeatureSystem};
pub use error::{Error, Result};
pub use kernel::{LabelSet, OperatorKernelTable, ScalarKernelMatrix};
pub use linalg::{CMatrix, CVector, C64};

/// Default relative tolerance for positivity tests and rank cutoffs.
pub const DEFAULT_TOL: f64 = 1e-10;
