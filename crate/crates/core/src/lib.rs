//! Multiscale model reduction for diffusion problems on high-contrast media,
//! and staged neural surrogates that map reduced source data to the coarse
//! solution.
//!
//! - [`grid_fem`]: bilinear finite elements on a uniform two-level grid.
//! - [`msreduction`]: constraint energy minimizing multiscale basis.
//! - [`problems`]: permeability fields, sources and dataset generation.
//! - [`nn`]: tensors, a reverse-mode tape, stage networks and Adam.
//! - [`multistage`]: input views, stage training and evaluation reports.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid_fem;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod msreduction;
pub mod multistage;
pub mod nn;
pub mod problems;

pub use error::{Error, Result};

/// The guide's code samples run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/fine-scale.md")]
    mod fine_scale {}
    #[doc = include_str!("../../../book/src/multiscale-basis.md")]
    mod multiscale_basis {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/staged-training.md")]
    mod staged_training {}
}
