//! Numerical laboratory for Yang-Mills-Higgs fields on long cylinders.
//!
//! The crate discretizes the YMH variational problem for a pair `(A, u)` —
//! a Lie-algebra-valued connection and a section into an embedded target
//! manifold — over cylinders `[-T, T] × S¹`, finds critical points by
//! projected gradient descent, and measures the neck-geometry diagnostics
//! that govern degenerating collar limits:
//!
//! * angular energy `Θ(t) = ∫ |∂̂u|² dθ` and its exponential decay rate,
//! * radial balance `e(t) = ∫ (|u_t|² − |∂̂u|²) dθ`,
//! * spectral Poincaré constants of the twisted circle operator
//!   `L = (∂_θ + 𝕏)ᵀ(∂_θ + 𝕏)`,
//! * holonomy limits, balanced temporal gauges and flatness profiles,
//! * the sequence-level quantities `μ = T·e`, `ν = T·√e`, `κ = T·ρ`,
//!   `ω = T·ρ²` and the resulting neck classification (closed orbit,
//!   twisted geodesic, C. Neumann orbit).
//!
//! Heavy per-row sweeps run on rayon when the `parallel` feature is
//! enabled (default) and fall back to plain loops otherwise; see
//! [`exec`] for the dispatch and the bench suite for a comparison.

pub mod collar;
pub mod error;
pub mod exec;
pub mod fitting;
pub mod gauge;
pub mod geodesics;
pub mod harness;
pub mod io;
pub mod lattice;
pub mod lie_action;
pub mod linalg;
pub mod neck;
pub mod spectral;
pub mod ymh;

pub use error::{Result, YmhError};
