//! Fault and performance detection and localization for virtualized network
//! telemetry.
//!
//! The crate is organised along the processing flow:
//!
//! * [`ingest`] loads Telstra-layout relational fault tables and KDE telemetry
//!   records and turns them into dense design matrices.
//! * [`synthgen`] fits per-class Gaussian kernel density estimates and draws
//!   synthetic records from them with a random-walk Metropolis chain.
//! * [`shallow`] holds the detection classifiers: SMO-trained SVM, alternating
//!   decision trees and random forests.
//! * [`deep`] holds sparse autoencoders stacked under a softmax head.
//! * [`pipeline`] routes a record through fault/no-fault, manifest/impending,
//!   localization and severity prediction.
//! * [`eval`] computes confusion matrices, the metric report and k-fold CV.
//! * [`persist`] is the versioned JSON model file format.

pub mod deep;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod persist;
pub mod pipeline;
pub mod rng;
pub mod shallow;
pub mod simulate;
pub mod synthgen;

pub use error::{FcpError, Result};
