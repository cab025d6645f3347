use rayon::prelude::*;

use super::grid::{BandSet, ImageStack, RasterGrid};
use crate::error::Result;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Index of the vector minimizing the summed Euclidean distance to the
/// others; the earliest on ties.
///
/// Each candidate's distances are summed in ascending order, so candidates
/// with the same multiset of distances get bit-identical sums and exact
/// ties resolve by position.
pub fn medoid_index(candidates: &[&[f64]]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut d = Vec::with_capacity(candidates.len());
    for (i, a) in candidates.iter().enumerate() {
        d.clear();
        d.extend(candidates.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, b)| euclid(a, b)));
        d.sort_unstable_by(f64::total_cmp);
        let s: f64 = d.iter().sum();
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-pixel medoid over epochs. An epoch is a candidate at a pixel only if
/// every band is valid there; pixels without candidates are nodata. The
/// output keeps the band nodata values of the first epoch.
pub fn medoid_composite(stack: &ImageStack) -> Result<BandSet> {
    let spec = stack.spec();
    let nb = stack.band_names.len();
    let ne = stack.epochs.len();
    let n = spec.n_cells();
    let first = &stack.epochs[0];
    let mut out: Vec<Vec<f64>> = (0..nb).map(|_| vec![0.0; n]).collect();

    // Row-parallel: each row computes its medoid epochs independently.
    let choices: Vec<Vec<Option<usize>>> = (0..spec.nrows)
        .into_par_iter()
        .map(|r| {
            let mut vecs: Vec<Vec<f64>> = vec![Vec::with_capacity(nb); ne];
            let mut valid: Vec<usize> = Vec::with_capacity(ne);
            (0..spec.ncols)
                .map(|c| {
                    valid.clear();
                    for (e, epoch) in stack.epochs.iter().enumerate() {
                        let v = &mut vecs[e];
                        v.clear();
                        for b in &epoch.bands {
                            match b.get(r, c) {
                                Some(x) => v.push(x),
                                None => break,
                            }
                        }
                        if v.len() == nb {
                            valid.push(e);
                        }
                    }
                    let cands: Vec<&[f64]> = valid.iter().map(|&e| vecs[e].as_slice()).collect();
                    medoid_index(&cands).map(|i| valid[i])
                })
                .collect()
        })
        .collect();

    for (r, row) in choices.iter().enumerate() {
        for (c, choice) in row.iter().enumerate() {
            let i = r * spec.ncols + c;
            for b in 0..nb {
                out[b][i] = match choice {
                    Some(e) => stack.epochs[*e].bands[b].values[i],
                    None => first.bands[b].nodata,
                };
            }
        }
    }
    let bands = out
        .into_iter()
        .zip(&first.bands)
        .map(|(values, b)| RasterGrid::new(spec, b.nodata, values))
        .collect::<Result<Vec<_>>>()?;
    BandSet::new(stack.band_names.clone(), bands)
}
