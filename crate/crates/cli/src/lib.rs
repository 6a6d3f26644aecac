//! Library surface of the pipeline driver; the `companions` binary is a
//! thin wrapper over these modules, and the integration tests drive them
//! directly.

pub mod config;
pub mod manifest;
pub mod stages;
pub mod svg;
