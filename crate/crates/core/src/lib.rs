//! Semi-supervised image and vector classification with interdigitated
//! labeled/unlabeled batches, circular-shift embedding fusion and
//! delta-consistency regularization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod layout;
pub mod linalg;
pub mod losses;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
