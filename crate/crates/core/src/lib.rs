//! Numerics for the reduced critical-mass Keller-Segel grow-up problem
//!
//! ```text
//! u_t = x u_xx + 2 u u_x,   0 < x < 1,   u(0,t) = 0,   u(1,t) = xi,
//! ```
//!
//! whose slope at the origin grows like `exp(5/2 + sqrt(2t))` when `xi = 1`.
//!
//! * [`grid`]: graded meshes, snapshots and the rho -> Q -> N -> u -> w chain.
//! * [`special`]: the operator `L`, its inverse `L0^{-1}` and the tabulated
//!   functions `f`, `g`, `h`, `phi` used by the barriers.
//! * [`matching`]: the ODE for `a(t)` and the derived `b`, `gamma`.
//! * [`barriers`]: lower/upper barrier evaluation and residual certification.
//! * [`solver`]: implicit finite-volume solver and grow-up observables.
//! * [`experiments`]: rate, profile, certification and sandwich drivers.

pub mod barriers;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod matching;
pub mod quadrature;
pub mod solver;
pub mod special;
mod tridiag;

pub use error::{Error, Result};
pub use matching::closed_a;
