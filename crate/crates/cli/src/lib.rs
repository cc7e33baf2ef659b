//! Configuration, campaign orchestration and canned reproduction bundles for
//! the `dqid` command-line tool.

pub mod campaign;
pub mod config;
pub mod reproduce;

pub use campaign::{run_estimate, run_simulate, CliError, Report};
pub use config::{CampaignConfig, ConfigError, EstimatorKind};
pub use reproduce::{run_reproduce, Summary, IDS};
