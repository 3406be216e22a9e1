//! Robust inflow control for road networks described by the LWR model with uncertain
//! turning ratios at junctions.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod compat;
pub mod ctm;
pub mod error;
pub mod io;
pub mod laxhopf;
pub mod linalg;
pub mod network;
pub mod program;
pub mod robust;
pub mod scenarios;

pub use error::{Error, NetworkError, Result};
