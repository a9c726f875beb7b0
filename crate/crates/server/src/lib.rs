//! HTTP forecasting service and the `muqar` command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod registry;

pub use api::{router, AppState};
pub use registry::Registry;
