//! Rough Bergomi simulation, VIX futures and options pricing, eSSVI surfaces
//! and joint VIX/SPX calibration.
//!
//! The guide in `book/` walks through the pipeline; its listings run as
//! doc-tests of this crate.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod black;
pub mod bss;
pub mod calib;
pub mod error;
pub mod interp;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod quad;
pub mod rng;
pub mod specfun;
pub mod spx;
pub mod ssvi;
pub mod vix;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/vix.md")]
    mod vix {}
    #[doc = include_str!("../../../book/src/surfaces.md")]
    mod surfaces {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
