//! Area-weighted circular-plot extraction.
//!
//! The overlap of the plot circle with a pixel is estimated by testing the
//! midpoints of a 16 × 16 subcell lattice over the pixel.

use super::grid::BandSet;
use crate::error::{Error, Result};

/// Radius of a 250 m² circular plot.
pub const PLOT_RADIUS_M: f64 = 8.92;
/// Radius used when no pixel under the plot is valid.
pub const FALLBACK_RADIUS_M: f64 = 18.0;
pub const SUBCELLS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Per-band area-weighted means; `None` when no valid pixel was found
    /// at either radius (missing predictors).
    pub values: Option<Vec<f64>>,
    pub radius_used: f64,
}

/// Fraction of each pixel covered by the circle, for pixels touching its
/// bounding box: `(row, col, fraction)`.
pub fn circle_coverage(spec: &super::GridSpec, x: f64, y: f64, radius: f64) -> Vec<(usize, usize, f64)> {
    let cs = spec.cell_size;
    let (c_lo, r_lo) = spec.fractional_position(x - radius, y + radius);
    let (c_hi, r_hi) = spec.fractional_position(x + radius, y - radius);
    let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n.saturating_sub(1));
    let (c0, c1) = (clamp(c_lo, spec.ncols), clamp(c_hi, spec.ncols));
    let (r0, r1) = (clamp(r_lo, spec.nrows), clamp(r_hi, spec.nrows));
    let r2 = radius * radius;
    let step = cs / SUBCELLS as f64;
    let mut out = Vec::new();
    for r in r0..=r1 {
        let top = spec.origin_y - r as f64 * cs;
        for c in c0..=c1 {
            let left = spec.origin_x + c as f64 * cs;
            let mut hits = 0usize;
            for i in 0..SUBCELLS {
                let dy = top - (i as f64 + 0.5) * step - y;
                for j in 0..SUBCELLS {
                    let dx = left + (j as f64 + 0.5) * step - x;
                    if dx * dx + dy * dy <= r2 {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                out.push((r, c, hits as f64 / (SUBCELLS * SUBCELLS) as f64));
            }
        }
    }
    out
}

fn weighted_means(bands: &BandSet, cover: &[(usize, usize, f64)]) -> Option<Vec<f64>> {
    bands
        .bands
        .iter()
        .map(|b| {
            let mut sw = 0.0;
            let mut swv = 0.0;
            for &(r, c, w) in cover {
                if let Some(v) = b.get(r, c) {
                    sw += w;
                    swv += w * v;
                }
            }
            (sw > 0.0).then(|| swv / sw)
        })
        .collect()
}

/// Area-weighted band means under a circle at (x, y). When some band has no
/// valid pixel under the circle the extraction is repeated once with
/// [`FALLBACK_RADIUS_M`].
pub fn extract_plot_predictors(bands: &BandSet, x: f64, y: f64, radius: f64) -> Result<Extraction> {
    if !bands.spec.contains(x, y) {
        return Err(Error::input(format!("plot center ({x}, {y}) lies outside the raster extent")));
    }
    if !(radius > 0.0) {
        return Err(Error::input(format!("plot radius must be positive, got {radius}")));
    }
    let values = weighted_means(bands, &circle_coverage(&bands.spec, x, y, radius));
    if values.is_some() || radius >= FALLBACK_RADIUS_M {
        return Ok(Extraction {
            values,
            radius_used: radius,
        });
    }
    Ok(Extraction {
        values: weighted_means(bands, &circle_coverage(&bands.spec, x, y, FALLBACK_RADIUS_M)),
        radius_used: FALLBACK_RADIUS_M,
    })
}
