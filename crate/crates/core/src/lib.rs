//! Benchmark evaluation over explicit evaluation-condition spaces.
//!
//! A [`space::ConfigSpace`] enumerates every configuration of the conditions an
//! evaluated object runs under. [`design`] turns a space into a seeded
//! [`design::SamplePlan`], [`runner`] measures objects against a plan,
//! [`compare`] turns two paired result sets into a verdict, and [`oracle`]
//! scores methodologies against the exact population mean of a synthetic
//! model.

pub mod compare;
pub mod design;
pub mod fingerprint;
pub mod oracle;
pub mod rng;
pub mod runner;
pub mod space;
pub mod stats;
