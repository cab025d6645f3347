//! Resampling onto a target grid and NDVI.
//!
//! A target cell takes the value at its center. Points outside the source
//! extent are nodata.

use rayon::prelude::*;

use super::grid::{GridSpec, RasterGrid};
use crate::error::{Error, Result};

fn resample_with(src: &RasterGrid, target: GridSpec, f: impl Fn(f64, f64) -> Option<f64> + Sync) -> RasterGrid {
    let mut values = vec![src.nodata; target.n_cells()];
    values.par_chunks_mut(target.ncols.max(1)).enumerate().for_each(|(r, row)| {
        for (c, out) in row.iter_mut().enumerate() {
            let (x, y) = target.cell_center(r, c);
            let (px, py) = src.spec.fractional_position(x, y);
            let inside = px >= 0.0 && py >= 0.0 && px <= src.spec.ncols as f64 && py <= src.spec.nrows as f64;
            if inside {
                if let Some(v) = f(px, py) {
                    *out = v;
                }
            }
        }
    });
    RasterGrid {
        spec: target,
        nodata: src.nodata,
        values,
    }
}

/// Lower source index and weight of the upper one along one axis, for a
/// position `p` in cell units from the grid edge. Positions between the
/// edge and the outermost cell center are clamped onto that center.
fn bilinear_axis(p: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let u = (p - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = (u.floor() as usize).min(n - 2);
    (i0, i0 + 1, u - i0 as f64)
}

/// Bilinear interpolation between the four surrounding source centers.
/// A nodata neighbor makes the output nodata when its weight is non-zero.
pub fn bilinear_resample(src: &RasterGrid, target: GridSpec) -> RasterGrid {
    resample_with(src, target, |px, py| {
        let (c0, c1, fx) = bilinear_axis(px, src.spec.ncols);
        let (r0, r1, fy) = bilinear_axis(py, src.spec.nrows);
        let taps = [
            (r0, c0, (1.0 - fy) * (1.0 - fx)),
            (r0, c1, (1.0 - fy) * fx),
            (r1, c0, fy * (1.0 - fx)),
            (r1, c1, fy * fx),
        ];
        let mut acc = 0.0;
        for (r, c, w) in taps {
            if w == 0.0 {
                continue;
            }
            acc += w * src.get(r, c)?;
        }
        Some(acc)
    })
}

/// Index of the nearest cell center along one axis; a point exactly between
/// two centers goes to the lower index.
fn nearest_axis(p: f64, n: usize) -> usize {
    ((p - 1.0).ceil().max(0.0) as usize).min(n - 1)
}

/// Value of the nearest source cell center.
pub fn nearest_resample(src: &RasterGrid, target: GridSpec) -> RasterGrid {
    resample_with(src, target, |px, py| {
        src.get(nearest_axis(py, src.spec.nrows), nearest_axis(px, src.spec.ncols))
    })
}

/// `(nir − red) / (nir + red)`; nodata where either input is nodata or the
/// denominator is zero. Uses the nodata value of `nir`.
pub fn ndvi(nir: &RasterGrid, red: &RasterGrid) -> Result<RasterGrid> {
    nir.spec.ensure_same(&red.spec, "ndvi")?;
    if nir.values.len() != red.values.len() {
        return Err(Error::input("ndvi: band sizes differ"));
    }
    let values = nir
        .values
        .iter()
        .zip(&red.values)
        .map(|(&n, &r)| {
            let s = n + r;
            if nir.is_nodata(n) || red.is_nodata(r) || s == 0.0 {
                nir.nodata
            } else {
                (n - r) / s
            }
        })
        .collect();
    RasterGrid::new(nir.spec, nir.nodata, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(cell: f64, nrows: usize, ncols: usize, values: Vec<f64>) -> RasterGrid {
        RasterGrid::new(GridSpec::new(0.0, nrows as f64 * cell, cell, nrows, ncols).unwrap(), -9999.0, values).unwrap()
    }

    #[test]
    fn bilinear_is_exact_at_centers_and_symmetric_at_midpoints() {
        let src = grid(10.0, 2, 2, vec![0.0, 0.0, 10.0, 10.0]);
        assert_eq!(bilinear_resample(&src, src.spec).values, src.values);
        let mid = GridSpec::new(5.0, 15.0, 10.0, 1, 1).unwrap();
        assert_eq!(bilinear_resample(&src, mid).values, vec![5.0]);
    }

    #[test]
    fn bilinear_quarter_offset() {
        // Centers at x ∈ {5, 15}, y ∈ {15, 5}; point (7.5, 12.5) sits a
        // quarter cell right of and below the top-left center.
        let src = grid(10.0, 2, 2, vec![0.0, 4.0, 8.0, 12.0]);
        let t = GridSpec::new(7.0, 13.0, 1.0, 1, 1).unwrap();
        let v = bilinear_resample(&src, t).values[0];
        let expected = 0.0 * 0.5625 + 4.0 * 0.1875 + 8.0 * 0.1875 + 12.0 * 0.0625;
        assert!((v - expected).abs() < 1e-12, "{v}");
    }

    #[test]
    fn bilinear_nodata_neighbor_propagates() {
        let src = grid(10.0, 2, 2, vec![0.0, -9999.0, 10.0, 10.0]);
        let mid = GridSpec::new(5.0, 15.0, 10.0, 1, 1).unwrap();
        assert_eq!(bilinear_resample(&src, mid).values, vec![-9999.0]);
        assert_eq!(bilinear_resample(&src, src.spec).values, src.values);
    }

    #[test]
    fn nearest_upsample_repeats_blocks() {
        let src = grid(20.0, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let t = GridSpec::new(0.0, 40.0, 10.0, 4, 4).unwrap();
        let out = nearest_resample(&src, t);
        assert_eq!(
            out.values,
            vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        assert_eq!(nearest_resample(&src, src.spec), src);
    }

    #[test]
    fn nearest_boundary_goes_to_lower_index() {
        let src = grid(10.0, 1, 2, vec![1.0, 2.0]);
        // Target center at x = 10, the shared edge of the two source cells.
        let t = GridSpec::new(5.0, 10.0, 10.0, 1, 1).unwrap();
        assert_eq!(nearest_resample(&src, t).values, vec![1.0]);
        let outside = GridSpec::new(30.0, 10.0, 10.0, 1, 1).unwrap();
        assert_eq!(nearest_resample(&src, outside).values, vec![-9999.0]);
    }

    #[test]
    fn ndvi_cases() {
        let nir = grid(1.0, 1, 3, vec![0.3, 0.5, 0.0]);
        let red = grid(1.0, 1, 3, vec![0.3, 0.1, 0.0]);
        let v = ndvi(&nir, &red).unwrap();
        assert_eq!(v.values[0], 0.0);
        assert!((v.values[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(v.get(0, 2), None);
        let other = grid(2.0, 1, 3, vec![0.0; 3]);
        assert!(ndvi(&nir, &other).is_err());
    }
}
