#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod lp;
pub mod network;
pub mod recurrent;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
