//! Generalized (multi-proposal) importance sampling for families of
//! unnormalized densities.
//!
//! * [`rlogistic`] estimates the unknown proposal normalizer ratios `d` by
//!   reverse logistic regression on stage-1 chains.
//! * [`gis`] computes `û`, `v̂` and `η̂` for every target from independent
//!   stage-2 chains.
//! * [`mcse`] attaches spectral-variance standard errors to all of these.
//! * [`divergence`] and [`design`] choose the proposal (skeleton) set.
//! * [`models`] provides the autologistic lattice model and analytic
//!   continuous families used as oracles.

pub mod design;
pub mod divergence;
pub mod error;
pub mod exec;
pub mod family;
pub mod gis;
pub mod linalg;
pub mod mcse;
pub mod models;
pub mod profile;
pub mod rlogistic;
pub mod streams;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use family::{
    log_mixture_denominator, ChainKind, ChainSample, DensityRef, Draws, Family, FamilyGrid,
    FnDensity, LogWeightTable, SampleBank, SkeletonSet, Support, UnnormalizedDensity,
};
