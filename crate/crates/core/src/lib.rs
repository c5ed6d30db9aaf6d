//! Motif sequencing at desk scale.
//!
//! This crate builds everything needed to compare two ways of producing
//! sequences of motor-like output motifs with recurrent dynamics:
//!
//! * gradient-trained tanh RNNs ([`rnn`]) that learn motifs from random
//!   initial states, and
//! * an analytically constructed switching linear "thalamocortical" model
//!   ([`tc`]) whose motif loops are placed by rank-one eigenvalue assignment
//!   and whose transitions run through a shared preparatory loop.
//!
//! Supporting pieces: piecewise-constant target motifs derived from an
//! Ornstein-Uhlenbeck process ([`motif`]), constrained complex-exponential
//! fits of those motifs ([`expfit`]), and transition-robustness evaluation
//! with an exact Wilcoxon signed-rank test ([`eval`]).
//!
//! All generation, fitting, training, and evaluation is deterministic given
//! the seeds recorded in the artifacts; see [`rng`] for the seed-derivation
//! scheme.

// Link the system BLAS/LAPACK used by ndarray-linalg.
extern crate openblas_src;

pub mod error;
pub mod eval;
pub mod expfit;
pub mod linalg;
pub mod motif;
pub mod rng;
pub mod rnn;
pub mod tc;

pub use error::{CoreError, Result};
