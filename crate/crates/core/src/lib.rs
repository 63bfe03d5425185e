//! Internally consistent representation layers and a focus/component thought
//! runtime that can host Turing machine programs.
//!
//! The crate is split along the same lines as the experiments it supports:
//!
//! - [`consistency`]: dense linear layers whose generative map is a left
//!   inverse of the forward map, residue extraction and stacking.
//! - [`nonlinear`]: mirror rectified layers, basis-set factorisations of the
//!   identity and invertible circular convolutions.
//! - [`training`]: reconstruction-ICA style objectives and a deterministic
//!   gradient-descent trainer.
//! - [`memory`]: a most-recent-hash store and a binary RBM used to fill
//!   missing residue bits.
//! - [`runtime`]: slot-structured visible states, components, focus
//!   policies and the step/run loop.
//! - [`tm`]: Turing machine specs, a reference simulator and three compilers
//!   onto the runtime.
//! - [`complexity`]: exact and Monte Carlo search-cost analysis.
//! - [`verify`]: invariant suites exposed through the command line.

pub mod complexity;
pub mod consistency;
pub mod memory;
pub mod nonlinear;
pub mod runtime;
pub mod tm;
pub mod training;
pub mod verify;

mod util;

pub use consistency::{Matrix, Vector};
pub use util::{seeded as seeded_rng, Rng as SeededRng};
