//! Group-relative policy optimization for flow-matching samplers on small
//! synthetic tasks.
//!
//! A velocity network is pretrained by flow matching, turned into a
//! stochastic policy by an SDE sampler with the same marginals, and then
//! fine-tuned against a reward with a clipped surrogate. Two advantage
//! estimators are provided: terminal-reward group normalisation and a
//! value-weighted estimator built from per-step instant rewards.
//!
//! Data-parallel loops go through [`exec::Exec`]; with the `parallel` feature
//! they run on rayon, and every reduction is performed in index order so both
//! modes produce identical bits.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advantage;
pub mod diffnet;
pub mod envsuite;
pub mod error;
pub mod exec;
pub mod flowcore;
pub mod harness;
pub mod rng;
pub mod rollout;
pub mod trainer;

pub use error::{Error, Result};
