//! Subgraph concept networks for interpretable graph classification.
//!
//! The crate bundles a small reverse-mode differentiation engine
//! ([`ndiff`]), graph datasets ([`graphdata`]), the subgraph concept network
//! ([`scn`]) with its training objective ([`losses`]), two concept-graph
//! baselines ([`baselines`]), interpretability metrics ([`metrics`]),
//! explanation export ([`explain`]) and the experiment runner behind the
//! `scn` binary ([`experiment`]).

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod graphdata;
pub mod losses;
pub mod metrics;
pub mod ndiff;
pub mod scn;

pub use error::{Error, Result};
