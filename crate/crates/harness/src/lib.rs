//! Scenario runner for the liquid-lens VLC simulator: TOML configuration,
//! sweeps over the P1 schemes, spot diagrams, dataset generation and block
//! training for the learned scheme.

pub mod config;
pub mod dataset;
pub mod error;
pub mod scenario;
pub mod spots;
pub mod training;

pub use config::Config;
pub use error::{Error, Result};
