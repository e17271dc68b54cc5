//! Deterministic stages of a three-class cell instance segmentation
//! pipeline.
//!
//! Instance ground truth is turned into background / cell / touching classes
//! ([`gtprep`]), paired with contour-aware loss weights ([`weights`]) and
//! augmented ([`augment`]). A network trained elsewhere returns per-class
//! probability maps, which are scored ([`loss`]), decoded back into instances
//! ([`decode`]) and evaluated with panoptic quality ([`metrics`]).

pub mod augment;
pub mod decode;
pub mod error;
pub mod gtprep;
pub mod imagecore;
pub mod loss;
pub mod metrics;
pub mod morphology;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};

/// Toolkit version recorded in output manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/classes.md")]
    mod classes {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/loss.md")]
    mod loss {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
