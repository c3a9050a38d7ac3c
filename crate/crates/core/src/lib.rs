//! Latent state decoding, model estimation and reward-free planning for
//! episodic Block MDPs.

// Negated comparisons deliberately reject NaN; index loops mirror the maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod concentration;
pub mod counts;
pub mod error;
pub mod io;
pub mod kmedians;
pub mod metrics;
pub mod model;
pub mod planning;
pub mod rate;
pub mod refine;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/rate.md")]
    mod rate {}
    #[doc = include_str!("../../../book/src/chains.md")]
    mod chains {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
