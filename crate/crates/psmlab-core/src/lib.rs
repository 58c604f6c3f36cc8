//! Propensity score matching pipeline.
//!
//! Every stage is a pure function over owned data: synthetic data generation
//! ([`datagen`]), maximum-likelihood logistic propensity fits
//! ([`propensity`]), greedy caliper matching on the logit propensity score
//! ([`matching`]), covariate balance diagnostics ([`balance`]), post-matching
//! least-squares effect estimation ([`estimation`]), and a replicated caliper
//! sweep ([`harness`]) that ties them together.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel
//! scheduling and the command-line interface live in the `psmlab` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod balance;
pub mod datagen;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod matching;
pub mod numerics;
pub mod propensity;

pub use error::{Error, Result};
