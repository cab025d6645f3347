//! Raster engine: grids and class maps, file formats, medoid compositing,
//! resampling, NDVI, plot extraction and tiled map prediction.

mod composite;
mod extract;
mod format;
mod grid;
mod predict;
mod resample;

pub use composite::{medoid_composite, medoid_index};
pub use extract::{circle_coverage, extract_plot_predictors, Extraction, FALLBACK_RADIUS_M, PLOT_RADIUS_M, SUBCELLS};
pub use format::{
    format_ascii_grid, parse_ascii_grid, read_band_set, read_class_map, read_grid, read_manifest, write_band_set, write_class_map, write_grid,
    GridEncoding, BINARY_MAGIC,
};
pub use grid::{domain_legend, mask_legend, BandSet, ClassMap, GridSpec, ImageStack, RasterGrid};
pub use predict::{class_areas, predict_map, synthetic_area, FeatureSource, DEFAULT_TILE_SIZE};
pub use resample::{bilinear_resample, ndvi, nearest_resample};
