//! Equilibrium computation for an online marketplace where sellers of raw
//! agricultural products may adulterate, the platform sets a take rate, and
//! regulators pull penalty, inspection and traceability levers.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the market primitives: parameters, the quality-gain
//!   curve, attraction-model choice probabilities and profit functions.
//! * [`equilibrium`] solves the sellers' pricing game and the symmetric
//!   adulteration game.
//! * [`platform`] classifies the platform's profit shape in the take rate
//!   and computes the closed-form optimal take rate.
//! * [`policy`] covers administrative penalties, penalty escalation and
//!   traceability adoption.
//! * [`oracle`] contains brute-force and Monte-Carlo checks that are kept
//!   independent of the closed forms they validate.
//! * [`calibration`] ingests seller price/volume data and drives sweeps.
//!
//! Data-parallel work (grids, Monte-Carlo batches, sweeps) goes through
//! [`exec`], which runs on rayon when the `parallel` feature is enabled and
//! falls back to plain iterators otherwise. Both paths produce identical
//! results.

pub mod calibration;
pub mod dataset;
pub mod equilibrium;
mod error;
pub mod exec;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod platform;
pub mod policy;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{AdulterationCurve, MarketParams, QualityGain, QualityVector, ShockRealization};
