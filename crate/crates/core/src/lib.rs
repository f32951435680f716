//! Adaptive spectral Legendre-Galerkin solver on the square `(-1, 1)^2`.
//!
//! The pipeline, module by module:
//!
//! - [`legendre1d`], [`quadrature`]: Legendre and Babuška-Shen (BS) kernels,
//!   closed-form mass entries, product linearization, Gauss rules.
//! - [`index_space`]: tensor index sets, orderings and parity blocks.
//! - [`tensor_stiffness`]: the BS stiffness `S_eta`, diagonal normalization
//!   and extreme eigenvalues.
//! - [`orthonormalize`]: Gram-Schmidt factor `G = L^{-T}` of a parity block
//!   and its column decay.
//! - [`compress`]: the compressed factor `G_t` (threshold or diagonal-wise)
//!   with certified bounds on the spectrum of the nearly orthonormal basis.
//! - [`operator_assembly`]: variable-coefficient operators `A_eta`, `A_phi`
//!   and exponential decay classes.
//! - [`adaptive`]: GAL, F-RES, DÖRFLER, E-DÖRFLER, COARSE and the FPC-ADLEG
//!   loop with its per-iteration trace.
//! - [`sparsity`]: best N-term curves, Gevrey-class fits and cardinality
//!   bounds.
//! - [`experiments`]: config-driven drivers behind the `adleg` binary, with
//!   an on-disk factor cache.

// `!(x > 0.0)` is used deliberately so that NaN is rejected together with
// non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod index_space;
pub mod legendre1d;
pub mod linalg;
pub mod quadrature;
pub mod sparse;
pub mod tensor_stiffness;
pub mod orthonormalize;
pub mod compress;
pub mod operator_assembly;
pub mod sparsity;
pub mod adaptive;
pub mod experiments;
