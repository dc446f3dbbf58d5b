//! Randomized solvers for linear systems whose spectrum has a small number
//! of large singular values.
//!
//! The crate provides:
//!
//! - dense linear algebra kernels with a compact SVD and spectral summaries
//!   ([`linalg`]),
//! - randomized Hadamard mixing of the row space ([`rht`]),
//! - determinantal and uniform block samplers, exact and Markov-chain
//!   ([`sampling`]),
//! - elementary symmetric polynomial tables and exact projection
//!   expectations used to certify convergence rates ([`esp`]),
//! - sparse sketching, preconditioning, and the projected inner solve
//!   ([`inner`]),
//! - the top-level iterative solvers ([`solvers`]).
//!
//! All randomness flows through explicitly seeded counter-based generators,
//! so every routine is reproducible from a `u64` seed.

pub mod error;
pub mod esp;
pub mod flops;
pub mod inner;
pub mod linalg;
pub mod rht;
pub mod sampling;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{CompactSvd, DenseMatrix, SpectralProfile};
pub use sampling::{DppKernel, SampleSet};
pub use solvers::{SolveReport, SolverConfig};
