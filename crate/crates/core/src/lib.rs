//! Decoupled two-stage training for long-tailed text classification.
//!
//! Stage one learns a TextCNN feature extractor under one of four class
//! sampling strategies (instance-balanced, class-balanced, square-root,
//! progressively-balanced). Stage two freezes the extractor and either
//! re-trains the linear head under class-balanced sampling or replaces it
//! with a nearest-class-mean classifier.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, the
//! command-line front end and the experiment grid live in the `longtail`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod ncm;
pub mod rng;
pub mod sampling;
pub mod text;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
