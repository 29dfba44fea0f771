//! Power plant type and cooling mechanism classification from 10-band
//! Sentinel-2 patches.
//!
//! The crate covers the whole pipeline: catalog and raster ingestion
//! ([`ingest`]), dataset construction ([`dataset`]), a small-stem residual
//! network with its own CPU training engine ([`model`], [`training`]),
//! repeated balanced-draw evaluation ([`evaluation`]) and class activation
//! maps ([`explain`]). [`pipeline`] strings the stages together the way the
//! `plantscope` binary does.

pub mod classes;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod geo;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod training;

pub use classes::{CoolingClass, LabelMap, PlantClass, Task};
pub use error::{Error, Result};
