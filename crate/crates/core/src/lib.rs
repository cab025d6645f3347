//! Forest area by dominant tree-species group: raster preparation, Random
//! Forest classification, and design-based area estimation (direct,
//! model-assisted and poststratified) with the accompanying accuracy and
//! Monte Carlo tooling.
//!
//! Units: areas are km², coordinates and cell sizes are meters.

pub mod accuracy;
pub mod classifier;
pub mod domain;
pub mod error;
pub mod estimation;
pub mod geostat;
pub mod io;
pub mod numeric;
pub mod raster;
pub mod rng;
pub mod simulation;
pub mod smallarea;

pub use domain::Domain;
pub use error::{Error, Result};
