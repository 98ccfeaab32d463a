//! Experiment harness around `fglab-core`: configuration, deterministic
//! trial scheduling, CSV/manifest output and the CLI entry points.

pub mod config;
pub mod csvout;
pub mod experiments;
pub mod runner;
