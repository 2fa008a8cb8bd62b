//! Numerical laboratory for exponential Wasserstein contraction of SDEs on R^d.
//!
//! * [`model`]: drift/diffusion fields, expression language, built-in scenarios.
//! * [`coupling`]: synchronous, reflection and hybrid couplings of two solutions.
//! * [`ot`]: exact optimal transport (W_p, W_∞, Orlicz W_Φ) for empirical measures.
//! * [`theory`]: coefficient conditions, Lyapunov rate constants, scalar rate calculus.
//! * [`harness`]: end-to-end contraction, coupling-time, gradient and equilibrium experiments.

pub mod coupling;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod ot;
pub mod quad;
pub mod rng;
pub mod theory;
