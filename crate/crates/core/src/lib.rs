//! Derivative-free optimization of noisy objectives with adaptive
//! sampling and correlation-induced finite differences.

pub mod bench;
pub mod corcfd;
pub mod error;
pub mod fd;
pub mod linesearch;
pub mod optim;
pub mod oracle;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/finite-differences.md")]
    mod finite_differences {}
    #[doc = include_str!("../../../book/src/cor-cfd.md")]
    mod cor_cfd {}
    #[doc = include_str!("../../../book/src/adaptive-sampling.md")]
    mod adaptive_sampling {}
    #[doc = include_str!("../../../book/src/line-search.md")]
    mod line_search {}
    #[doc = include_str!("../../../book/src/algorithms.md")]
    mod algorithms {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
