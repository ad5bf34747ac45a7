//! Command-line pipeline, file formats and parallel drivers around
//! `prewhiten-core`.
//!
//! Results are identical for any thread count: every parallel stage maps
//! vertices independently and collects them in order.

pub mod cli;
pub mod compare;
pub mod config;
pub mod diagnose;
pub mod engine;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod scenario;
pub mod simulate;

pub use compare::{compare_strategies, Comparison};
pub use config::{PipelineConfig, Strategy};
pub use diagnose::{diagnose, DiagnoseConfig};
pub use engine::Engine;
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, Manifest, PipelineReport};
pub use scenario::ScenarioSpec;
pub use simulate::simulate;

/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
