//! Command-line front end: TOML scenarios, sweeps, a result cache, exports
//! and figures.

pub mod cache;
pub mod config;
pub mod error;
pub mod export;
pub mod plot;
pub mod presets;
pub mod run;
