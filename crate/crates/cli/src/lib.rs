//! Pipeline wiring, run configuration and the triage HTTP service behind
//! the `frforge` binary.

pub mod config;
pub mod pipeline;
pub mod serve;
