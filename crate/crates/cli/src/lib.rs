//! Configuration, resumable sweeps, scaling reports and validation for the
//! driven-dissipative Bose-Hubbard toolkit.

pub mod analyze;
pub mod config;
pub mod plot;
pub mod presets;
pub mod store;
pub mod sweep;
pub mod validate;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "QDBH_OUTPUT_DIR";
