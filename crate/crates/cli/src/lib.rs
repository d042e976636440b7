//! Library side of the `gcmac` command: configuration loading, report
//! emission and subcommand dispatch.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{execute, Cli, CliError};
pub use config::{parse_config, parse_config_str, Config, ConfigError, ConfigFile};
pub use report::{emit_report, Format, Report};
