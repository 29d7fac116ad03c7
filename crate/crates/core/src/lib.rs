//! Computable rates of metastability and asymptotic regularity for Fejér
//! monotone iterations, with exact arbitrary-precision bound evaluation and
//! an empirical checker that compares certified bounds against numerical
//! trajectories.

#![allow(clippy::too_many_arguments)]

pub mod checker;
pub mod error;
pub mod iterations;
pub mod moduli;
pub mod nat;
pub mod rates;
pub mod runner;
pub mod scenario;
pub mod schemes;

pub use error::{Error, Result};
pub use nat::{Budget, Nat, Real};
