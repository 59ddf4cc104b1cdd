//! Command-line front end: builds instances, runs solves and grid-search
//! baselines, emits JSON reports and a human-readable summary table.
//!
//! Configuration comes from flags and/or a JSON config file (`--config`);
//! flags always override file values. Identical config plus seed yields a
//! byte-identical report except for the `timing` fields, which are isolated
//! so determinism checks can diff everything else. Execution-environment
//! knobs (`--threads`, `--out`) are deliberately excluded from the echoed
//! config for the same reason.

pub mod config;
pub mod run;

pub use config::{resolve, Flags, InstanceKind, PartialConfig, RunConfig, Subcommand};
pub use run::{run, ExitStatus};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "IMPROX_OUT_DIR";
