//! Library surface of the interview CLI, exposed so integration tests can
//! drive the pipeline in-process.

pub mod analyze;
pub mod config;
pub mod dataset;
pub mod pipeline;
