//! Simulation and measurement of statistical matching attacks on
//! obfuscated, anonymized user traces.
//!
//! The pipeline is `X -> obfuscate -> Z -> anonymize -> Y`. Users hold
//! i.i.d. or Markov profiles known to the adversary; each user's samples
//! pass through a symmetric channel whose error probability `R_u` is drawn
//! once from `Uniform[0, a_n]`, and the columns are then shuffled by a
//! random permutation. The adversary sees `Y`, the profiles and `a_n`.

pub mod error;
pub mod rng;
pub mod adversary;
pub mod mechanisms;
pub mod privacy_metrics;
pub mod source_models;
pub mod theory_oracles;
pub mod experiments;

pub use error::{Error, Result};
