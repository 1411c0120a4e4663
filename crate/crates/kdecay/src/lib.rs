//! Numerical toolkit for the large-time decay theory of linearized kinetic
//! equations with a non-cutoff-type dissipation structure.
//!
//! The crate is organised bottom-up:
//!
//! * [`velocity`]: Gauss–Hermite velocity grids, weighted inner products and
//!   the anisotropic `N^{s,γ}` grid norm.
//! * [`operators`]: macroscopic projection `P`, the model collision operator
//!   `L = (I−P)⟨v⟩^{γ+2s}(I−P)` and the frequency symbol `B̂(ξ) = 2πi v·ξ + L`.
//! * [`besov`]: Littlewood–Paley filters, homogeneous Besov norms and an
//!   inequality test suite.
//! * [`semigroup`]: per-frequency evolution `e^{−tB̂}` and decay envelopes.
//! * [`spectral`]: small-frequency eigenvalue branches and projections.
//! * [`rates`]: the decay-rate calculus.
//! * [`harness`]: configurable experiments and their persisted results.
//!
//! Velocity functions are stored by nodal value. Operators act on
//! quadrature-orthonormal coordinates `y_k = √q_k f(v_k)`, in which the
//! quadrature inner product becomes the Euclidean one and every self-adjoint
//! operator is a symmetric matrix.

pub mod besov;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod operators;
pub mod rates;
pub mod semigroup;
pub mod spectral;
pub mod velocity;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Toolkit version echoed into every run result.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
