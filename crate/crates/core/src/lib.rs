//! Gradient flows for continuous-time LQR policy optimization.
//!
//! The crate is `no_std` with `alloc` when the default `std` feature is off.
//! Everything is dense and double precision; intended state dimensions are
//! small (a few tens at most).

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod flow;
pub mod iss;
pub mod lffnn;
pub mod linalg;
pub mod lqr;
pub mod ode;
pub mod pli;
pub mod scalar;

pub use error::{Error, Result};
pub use flow::{integrate_flow, FlowKind, FlowSpec, FlowState, Trajectory};
pub use iss::{DisturbanceKind, DisturbanceSpec};
pub use lffnn::FactoredGain;
pub use linalg::Matrix;
pub use lqr::{Gain, LqrProblem};
pub use pli::ComparisonFn;
