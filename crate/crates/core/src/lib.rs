//! Numerical core for spatially varying autoregressive prewhitening of
//! massive-univariate time-series regressions.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, parallel drivers
//! and the command line live in the companion `prewhiten` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

mod error;
mod math;

pub mod arfit;
pub mod data;
pub mod design;
pub mod glm;
pub mod linalg;
pub mod matrix;
pub mod regularize;
pub mod sim;
pub mod special;
pub mod stats;
pub mod whiten;

pub use data::{BoldMatrix, Condition, EventRow, EventSchedule, SurfaceMesh};
pub use design::{ColumnRole, DesignMatrix, HrfBasis, HrfModel, HrfVariant, Regressor};
pub use error::{
    ArError, DataError, DesignError, Error, GlmError, LinalgError, RegularizeError, SimError, StatsError,
};
pub use matrix::Matrix;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
