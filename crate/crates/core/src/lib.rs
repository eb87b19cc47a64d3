//! Deterministic single-process simulator of horizontal federated learning on
//! fairness-sensitive tabular classification.
//!
//! The crate models a server coordinating a pool of clients over synchronous
//! rounds. A configurable fraction of the pool is adversarial and can mount
//! fairness attacks (sensitive-attribute flipping), performance attacks
//! (Gaussian noise, scaled-mean FOE updates), or coordinated dual-facet
//! variants of both. On the defense side it implements plain FedAvg,
//! coordinate-wise median, an FLTrust-style cosine baseline, and the GuardFed
//! aggregator: a copula-augmented server dataset, a fairness-aware reference
//! model trained with group/label reweighting, and per-client trust scores
//! that gate a selective aggregation step.
//!
//! Everything is seeded: two runs of the same config produce byte-identical
//! result streams.

pub mod aggregation;
pub mod attacks;
pub mod copula;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod gauss;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
