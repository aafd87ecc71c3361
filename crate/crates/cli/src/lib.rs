//! Simulate treadmill trials with the prosthesis controllers, analyze their
//! stability and compare conditions.

pub mod commands;
pub mod config;
pub mod error;
pub mod persist;
pub mod report;

pub use commands::{cmd_analyze, cmd_compare, cmd_simulate, AnalyzeOutput};
pub use config::{Mode, RunConfig};
pub use error::{CliError, Result};
