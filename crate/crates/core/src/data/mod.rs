//! Datasets, distance files, calendars, synthetic data and run configuration.

pub mod calendar;
pub mod dataset;
pub mod distances;
pub mod synthetic;

pub use calendar::{Calendar, TimeFeatures};
pub use dataset::TrafficDataset;
pub use distances::{load_distances, parse_distances};
pub use synthetic::{generate_synthetic, SynthConfig};
pub mod config;

pub use config::{parse_config, Precision, RunConfig};
