//! Cross-lingual semantic representations built from source-language tokens.
//!
//! A sentence is represented either as a graph of event and entity
//! variables whose instances are token spans ([`repr::GraphRepr`]) or as a
//! bracketed token sequence with coreference bullets
//! ([`linear::LinearizedRepr`]). Around that core the crate provides a graph
//! similarity metric with pluggable instance similarity ([`metric`]),
//! coreference scoring and baselines ([`coref`]), and a small attention
//! decoder with a copy mechanism for resolving bullets ([`kernel`]).

pub mod coref;
pub mod fuzz;
pub mod io;
pub mod kernel;
pub mod linear;
pub mod metric;
pub mod repr;
pub mod sim;

use serde::{Deserialize, Serialize};

/// Precision, recall and F1. `degenerate` is set when a ratio had a zero
/// denominator and was scored 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

impl Prf {
    pub fn from_ratios(p_num: f64, p_den: f64, r_num: f64, r_den: f64) -> Prf {
        let degenerate = p_den == 0.0 || r_den == 0.0;
        let precision = if p_den == 0.0 { 0.0 } else { p_num / p_den };
        let recall = if r_den == 0.0 { 0.0 } else { r_num / r_den };
        Prf { precision, recall, f1: f1(precision, recall), degenerate }
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Seed for item `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/representations.md")]
    mod representations {}
    #[doc = include_str!("../../../book/src/linearization.md")]
    mod linearization {}
    #[doc = include_str!("../../../book/src/similarity.md")]
    mod similarity {}
    #[doc = include_str!("../../../book/src/coreference.md")]
    mod coreference {}
    #[doc = include_str!("../../../book/src/copy_kernel.md")]
    mod copy_kernel {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
