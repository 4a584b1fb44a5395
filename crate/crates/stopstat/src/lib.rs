//! Spatial statistics for live public-transport feeds.
//!
//! `stopstat` ingests vehicle-position and stop feeds from a transit
//! authority's open API, cleans the raw pings, and answers three questions
//! about the network: how regularly are stops spaced (nearest-neighbour
//! analysis), where is service actually concentrated (usage-weighted kernel
//! density), and which stops behave alike (k-means over position and usage)?
//!
//! The `examples/` directory is the front door; each file is a runnable
//! walkthrough of one capability:
//!
//! ```text
//! examples/
//!   poll_live_feed.rs      capture vehicle snapshots against a mock feed
//!   clean_observations.rs  filtering rules and what they each remove
//!   usage_and_services.rs  vehicle-to-stop assignment and service tables
//!   stop_pattern_nna.rs    Clark-Evans regularity test on stop locations
//!   density_map.rs         weighted KDE grid and bandwidth sweep
//!   cluster_usage.rs       k-means over standardized (lat, lon, usage)
//!   full_pipeline.rs       snapshots to reports in one call
//! ```
//!
//! Run one with `cargo run --example stop_pattern_nna`.
//!
//! A thin `stopstat` binary wraps the same entry points for shell use; see
//! the README for the verb list. All analyses are deterministic: stochastic
//! steps take explicit seeds, and repeated runs produce byte-identical
//! output files.

pub mod cleanse;
pub mod cluster;
pub mod error;
pub mod ingest;
pub mod geo;
pub mod kde;
pub mod nna;
pub mod report;
pub mod synth;
pub mod usage;

pub use error::{Error, Result};
