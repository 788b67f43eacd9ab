//! Finite-state approximations of plants over finite alphabets.
//!
//! The pipeline: a [`plant::FinitePlant`] is abstracted into window-based
//! DFMs ([`construct`]), the approximation error of each is measured as an
//! exact rho/mu gain ([`gain`]), the approximation properties are checked
//! exhaustively ([`verify`]), and an output-feedback controller is
//! synthesized and certified on the abstraction ([`synth`]).

pub mod cli;
pub mod codec;
pub mod construct;
pub mod gain;
pub mod plant;
pub mod rational;
pub mod synth;
pub mod verify;

#[cfg(test)]
mod fixtures;

pub use codec::{alpha, beta, verify_minimality, CodecTable, Disturbance};
pub use construct::{build_abstraction, build_nested_sequence, Abstraction, OutputPolicy};
pub use plant::{parse_plant, FinitePlant, Snapshot};
pub use rational::{Extended, Rational};
