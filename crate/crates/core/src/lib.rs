//! Stochastic-analysis engine for Feynman–Kac propagators.
//!
//! The crate simulates SDE systems `dx = b(x) dt + σ(x) dw`, estimates
//! propagators and expectation values by Monte Carlo over Wiener and bridge
//! paths, and checks every estimator against closed-form kernels
//! (heat, Ornstein–Uhlenbeck, Mehler, geometric Brownian motion) and exact
//! lattice solutions.
//!
//! Module map:
//!
//! * [`diffusion`] – [`DiffusionSpec`], time grids, paths, the generator and its adjoint.
//! * [`wiener`] – increments, the Fourier representation of Wiener paths, Brownian bridges.
//! * [`transform`] – the Lamperti / canonical transform and effective potentials.
//! * [`integrate`] – Euler–Maruyama, Stratonovich–Heun and the DST integrating-factor solver.
//! * [`kernels`] – closed-form propagators and PDE-residual checks.
//! * [`feynmankac`] – Monte Carlo propagator and expectation estimators, quench evolution.
//! * [`lattice`] – DST, DNLS, XXZ, Ising and defect-DST model factories.
//! * [`spde`] – Q-Wiener fields, stochastic transport/heat steppers, Hopf–Cole.
//! * [`verify`] – the acceptance checks, shared by the test suite and the CLI.
//!
//! Path-level work is spread over a rayon pool when the `parallel` feature is
//! enabled (the default). Every random draw is keyed by `(seed, path index)`
//! and every reduction uses a fixed pairwise tree, so results never depend on
//! the worker count.

// `!(a > b)` guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod feynmankac;
pub mod integrate;
pub mod kernels;
pub mod lattice;
pub mod linalg;
pub mod parallel;
pub mod rng;
pub mod spde;
pub mod stats;
pub mod transform;
pub mod verify;
pub mod wiener;

pub use diffusion::{DiffusionSpec, Path, TimeGrid};
pub use error::{Error, Result};
pub use parallel::Execution;
pub use rng::RngPolicy;
pub use stats::MCEstimate;
