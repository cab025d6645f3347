//! Synthetic landscapes and Monte Carlo checks of the area estimators
//! against a known census.

mod config;
mod landscape;
mod montecarlo;
mod sampling;

pub use config::{run_simulation, SimulationConfig};
pub use landscape::{
    counts_by_stratum, generate_landscape, stratum_legend, Landscape, LandscapeConfig, StratumConfig, LANDSCAPE_CLASSES,
};
pub use montecarlo::{build_map, monte_carlo, MapSource, McParams, McReport, McRow, MC_CSV_HEADER, Z95};
pub use sampling::{attach_predictions, draw_sample, Design, SamplingFrame};
