//! First-price auctions with discrete bids and subjective priors: equilibrium
//! verification, a fixed-point formulation, generalized circuits and the reduction
//! from circuits to auctions.

pub mod auction;
pub mod brouwer;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod gcircuit;
pub mod instances;
pub mod io;
pub mod reduction;
pub mod scalar;
pub mod solver_enum;

pub use error::{FpaError, Result};
