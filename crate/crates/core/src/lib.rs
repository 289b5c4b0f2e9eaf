//! Patent analytics: co-registration networks, centrality and community
//! structure, document clustering, and logistic technology life-cycle
//! forecasting.
//!
//! The stages are independent modules that communicate through plain data
//! ([`ingest::PatentRecord`], [`graph::CollabNetwork`], [`textvec::DocVector`],
//! [`cluster::ClusterModel`], [`lifecycle::LogisticFit`]). The [`pipeline`]
//! module wires them together and writes the report bundle.

pub mod cluster;
pub mod community;
pub mod config;
pub mod error;
pub mod export;
pub mod fixture;
pub mod graph;
pub mod ingest;
pub mod lifecycle;
pub mod pipeline;
pub mod textvec;

pub use error::{Error, Result};
