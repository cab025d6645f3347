//! Wall-to-wall classification and map-based areas.

use rayon::prelude::*;

use super::grid::{domain_legend, BandSet, ClassMap, GridSpec};
use crate::classifier::{CompiledForest, Forest};
use crate::domain::{Domain, NODATA_CODE};
use crate::error::{Error, Result};

/// Cells per prediction block; sized so a block of features stays in cache
/// while every tree is applied to it.
const BLOCK_CELLS: usize = 2048;

pub const DEFAULT_TILE_SIZE: usize = 256;

/// Per-cell feature values on a grid.
pub trait FeatureSource: Sync {
    fn spec(&self) -> GridSpec;

    fn feature_names(&self) -> Vec<String>;

    /// Writes the features `columns` of cells `(row, col0 .. col0 + len)`
    /// into `out` (cell-major, `len × columns.len()`), NaN where invalid.
    fn fill(&self, row: usize, col0: usize, len: usize, columns: &[usize], out: &mut [f64]);
}

impl FeatureSource for BandSet {
    fn spec(&self) -> GridSpec {
        self.spec
    }

    fn feature_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn fill(&self, row: usize, col0: usize, len: usize, columns: &[usize], out: &mut [f64]) {
        let p = columns.len();
        for (j, &f) in columns.iter().enumerate() {
            let band = &self.bands[f];
            let base = row * self.spec.ncols + col0;
            for c in 0..len {
                let v = band.values[base + c];
                out[c * p + j] = if band.is_nodata(v) { f64::NAN } else { v };
            }
        }
    }
}

/// Source columns feeding each forest feature, matched by name.
fn feature_columns(source: &dyn FeatureSource, forest: &Forest) -> Result<Vec<usize>> {
    let names = source.feature_names();
    forest
        .feature_names
        .iter()
        .map(|f| {
            names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| Error::input(format!("feature layer '{f}' required by the forest is missing")))
        })
        .collect()
}

/// Tiles as (row0, col0, rows, cols) in row-major tile order.
fn tiles(spec: &GridSpec, size: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for r0 in (0..spec.nrows).step_by(size) {
        for c0 in (0..spec.ncols).step_by(size) {
            out.push((r0, c0, size.min(spec.nrows - r0), size.min(spec.ncols - c0)));
        }
    }
    out
}

/// Classifies every mask cell with the forest.
///
/// Mask cells with code 0 are non-forest and `NODATA_CODE` is nodata; any
/// other code marks forest. Forest cells with any invalid feature are
/// mapped non-forest. Output codes follow [`Domain::code`]. The result does
/// not depend on `tile_size` or the thread count.
pub fn predict_map(source: &dyn FeatureSource, mask: &ClassMap, forest: &Forest, tile_size: usize) -> Result<ClassMap> {
    let spec = source.spec();
    spec.ensure_same(&mask.spec, "forest mask")?;
    if tile_size == 0 {
        return Err(Error::input("tile size must be positive"));
    }
    let columns = feature_columns(source, forest)?;
    let class_codes: Vec<u8> = forest
        .class_labels
        .iter()
        .map(|d| d.code().ok_or_else(|| Error::input(format!("forest class {d} has no map code"))))
        .collect::<Result<_>>()?;
    let non_forest = Domain::NonForest.code().expect("non-forest has a code");
    let p = columns.len();
    let compiled = CompiledForest::new(forest);

    let tile_list = tiles(&spec, tile_size);
    let results: Vec<Vec<u8>> = tile_list
        .par_iter()
        .map(|&(r0, c0, h, w)| {
            let mut codes = vec![non_forest; h * w];
            let mut pending: Vec<usize> = Vec::with_capacity(BLOCK_CELLS);
            let mut feats: Vec<f64> = Vec::with_capacity(BLOCK_CELLS * p);
            let mut row_buf = vec![0.0; w * p];
            let mut out = vec![0u32; BLOCK_CELLS];
            let mut flush = |pending: &mut Vec<usize>, feats: &mut Vec<f64>, codes: &mut [u8]| {
                let n = pending.len();
                compiled.predict_block(feats, &mut out[..n]);
                for (&i, &c) in pending.iter().zip(&out[..n]) {
                    codes[i] = class_codes[c as usize];
                }
                pending.clear();
                feats.clear();
            };
            for dr in 0..h {
                let r = r0 + dr;
                source.fill(r, c0, w, &columns, &mut row_buf);
                for dc in 0..w {
                    let m = mask.code(r, c0 + dc);
                    let i = dr * w + dc;
                    if m == NODATA_CODE {
                        codes[i] = NODATA_CODE;
                        continue;
                    }
                    if m == 0 {
                        continue;
                    }
                    let x = &row_buf[dc * p..(dc + 1) * p];
                    if x.iter().any(|v| v.is_nan()) {
                        continue;
                    }
                    pending.push(i);
                    feats.extend_from_slice(x);
                    if pending.len() == BLOCK_CELLS {
                        flush(&mut pending, &mut feats, &mut codes);
                    }
                }
            }
            if !pending.is_empty() {
                flush(&mut pending, &mut feats, &mut codes);
            }
            codes
        })
        .collect();

    let mut codes = vec![0u8; spec.n_cells()];
    for (&(r0, c0, h, w), tile) in tile_list.iter().zip(&results) {
        for dr in 0..h {
            let dst = (r0 + dr) * spec.ncols + c0;
            codes[dst..dst + w].copy_from_slice(&tile[dr * w..(dr + 1) * w]);
        }
    }
    ClassMap::new(spec, codes, domain_legend())
}

/// Map area of `target` in km² (forest-total counts every forest code).
pub fn synthetic_area(map: &ClassMap, target: Domain) -> f64 {
    let h = map.histogram();
    let cells: u64 = target.codes().iter().map(|&c| h[c as usize]).sum();
    cells as f64 * map.spec.cell_area_km2()
}

/// `(code, km²)` for every code present, nodata included, in code order.
pub fn class_areas(map: &ClassMap) -> Vec<(u8, f64)> {
    let a = map.spec.cell_area_km2();
    map.histogram()
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(c, &n)| (c as u8, n as f64 * a))
        .collect()
}
