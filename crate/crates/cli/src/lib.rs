//! Batch workflows over the `ecbench` library: persistence with sidecar
//! manifests, report rendering and the `ecbench` command line.

pub mod app;
pub mod manifest;
pub mod persist;
pub mod report;
