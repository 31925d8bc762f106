//! Ray-level stability analysis of incompressible 3D Euler flows.
//!
//! High-frequency perturbations of a smooth flow `u` travel along
//! bicharacteristics: a trajectory `γ_t`, a covector `ξ_t` and an amplitude
//! `b_t` obeying
//!
//! ```text
//! γ̇ = u(t, γ)
//! ξ̇ = −(∂ₓu)ᵀ ξ
//! ḃ = −(∂ₓu) b + 2 (ξᵀ(∂ₓu) b / |ξ|²) ξ
//! ```
//!
//! with the vorticity carried along the same trajectory by `ω̇ = (∂ₓu) ω`.
//! The crate is organised around that system:
//!
//! - [`fields`]: analytic catalog of divergence-free velocity fields with
//!   exact Jacobians and a structural verifier.
//! - [`flow`]: ray integration, inverse flow map and conserved-quantity
//!   monitoring, on top of the Runge–Kutta integrators in [`ode`].
//! - [`growth`]: amplitude growth `β(T) = sup |b_T|`, fluid Lyapunov slopes
//!   and the vorticity-growth certificate.
//! - [`wkb`]: gridded oscillatory wave packets built from rays and the
//!   measured linearized-Euler residual of those packets.
//! - [`burgers`]: the 1D Burgers contrast case, whose linearization is
//!   uniformly stable in L¹.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod burgers;
pub mod fields;
pub mod flow;
pub mod growth;
pub mod ode;
pub mod stats;
pub mod wkb;

pub use fields::{Domain, FieldKind, FieldSample, FieldSpec, TrigMode};
pub use flow::{IntegratorConfig, Method, RaySeed, RayState, Trajectory};

/// Three-vector of reals.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 real matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
