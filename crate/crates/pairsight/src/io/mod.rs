//! File formats, configuration schema, and result emission.

pub mod config;
pub mod events;
pub mod frames;
pub mod results;
