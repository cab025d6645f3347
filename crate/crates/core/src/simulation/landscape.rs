//! Seeded synthetic landscapes with a known census.
//!
//! Strata are horizontal bands of rows. Inside a stratum, a smoothed noise
//! field splits forest from non-forest at the configured quantile and a
//! second field splits the forest into species, so the realized class
//! fractions equal the mixture up to rounding. Features are class means
//! plus independent Gaussian noise.

use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::raster::{domain_legend, BandSet, ClassMap, GridSpec, RasterGrid};
use crate::rng::{mix64, SplitMix64};

/// Class order of mixtures and class means.
pub const LANDSCAPE_CLASSES: [Domain; 4] = [Domain::Spruce, Domain::Pine, Domain::Deciduous, Domain::NonForest];

const FOREST_FIELD: u64 = 0x464f_5245_5354;
const SPECIES_FIELD: u64 = 0x5350_4543_4945;
const FEATURE_NOISE: u64 = 0x4645_4154;

#[derive(Debug, Clone, PartialEq)]
pub struct StratumConfig {
    /// Share of the landscape rows.
    pub fraction: f64,
    /// Class fractions in [`LANDSCAPE_CLASSES`] order.
    pub mixture: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeConfig {
    pub seed: u64,
    pub nrows: usize,
    pub ncols: usize,
    /// m.
    pub cell_size: f64,
    pub strata: Vec<StratumConfig>,
    /// Typical patch diameter, m.
    pub patch_scale_m: f64,
    pub band_names: Vec<String>,
    /// Per-class band means, in [`LANDSCAPE_CLASSES`] order.
    pub class_means: [Vec<f64>; 4],
    pub noise_sd: f64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            nrows: 1000,
            ncols: 1000,
            cell_size: 30.0,
            strata: vec![
                StratumConfig { fraction: 0.4, mixture: [0.30, 0.20, 0.10, 0.40] },
                StratumConfig { fraction: 0.3, mixture: [0.20, 0.30, 0.15, 0.35] },
                StratumConfig { fraction: 0.2, mixture: [0.15, 0.25, 0.20, 0.40] },
                StratumConfig { fraction: 0.1, mixture: [0.10, 0.15, 0.15, 0.60] },
            ],
            patch_scale_m: 600.0,
            band_names: vec!["b1".into(), "b2".into(), "b3".into(), "b4".into()],
            class_means: [
                vec![1.0, 0.0, 0.0, 0.5],
                vec![0.0, 1.0, 0.0, 0.5],
                vec![0.0, 0.0, 1.0, 0.5],
                vec![0.0, 0.0, 0.0, -1.5],
            ],
            noise_sd: 0.5,
        }
    }
}

impl LandscapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nrows == 0 || self.ncols == 0 {
            return Err(Error::input("landscape needs at least one row and column"));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::input(format!("cell size must be positive, got {}", self.cell_size)));
        }
        if !(self.patch_scale_m >= self.cell_size && self.patch_scale_m.is_finite()) {
            return Err(Error::input(format!(
                "patch scale {} m must be at least the cell size {} m",
                self.patch_scale_m, self.cell_size
            )));
        }
        if self.strata.is_empty() || self.strata.len() > 254 {
            return Err(Error::input(format!("landscape needs 1 to 254 strata, got {}", self.strata.len())));
        }
        let fsum: f64 = self.strata.iter().map(|s| s.fraction).sum();
        if self.strata.iter().any(|s| !(s.fraction > 0.0)) || (fsum - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("stratum fractions must be positive and sum to 1, got sum {fsum}")));
        }
        for (h, s) in self.strata.iter().enumerate() {
            let sum: f64 = s.mixture.iter().sum();
            if s.mixture.iter().any(|&m| !(m >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::input(format!(
                    "mixture of stratum {} must be non-negative and sum to 1, got {:?}",
                    h + 1,
                    s.mixture
                )));
            }
        }
        if self.band_names.is_empty() {
            return Err(Error::input("landscape needs at least one feature band"));
        }
        for (c, m) in LANDSCAPE_CLASSES.iter().zip(&self.class_means) {
            if m.len() != self.band_names.len() || m.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!(
                    "class means of {c} need {} finite values, got {:?}",
                    self.band_names.len(),
                    m
                )));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::input(format!("noise sd must be ≥ 0, got {}", self.noise_sd)));
        }
        Ok(())
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec::new(0.0, self.nrows as f64 * self.cell_size, self.cell_size, self.nrows, self.ncols)
            .expect("validated dimensions")
    }

    /// First row of each stratum, plus `nrows` at the end.
    pub fn stratum_row_bounds(&self) -> Result<Vec<usize>> {
        let mut bounds = vec![0];
        let mut cum = 0.0;
        for s in &self.strata[..self.strata.len() - 1] {
            cum += s.fraction;
            bounds.push((cum * self.nrows as f64).round() as usize);
        }
        bounds.push(self.nrows);
        if bounds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input(format!("{} rows cannot hold every stratum", self.nrows)));
        }
        Ok(bounds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub truth: ClassMap,
    /// Codes 1..=H.
    pub strata: ClassMap,
    pub features: BandSet,
}

pub fn stratum_legend(n: usize) -> Vec<(u8, String)> {
    (1..=n as u8).map(|h| (h, format!("stratum-{h}"))).collect()
}

/// Standard normal noise, one stream per row.
fn white_noise(seed: u64, nrows: usize, ncols: usize) -> Vec<f64> {
    let mut v = vec![0.0; nrows * ncols];
    v.par_chunks_mut(ncols).enumerate().for_each(|(r, row)| {
        let mut rng = SplitMix64::for_stream(seed, r as u64);
        row.iter_mut().for_each(|x| *x = rng.normal());
    });
    v
}

/// Moving average of width `2r + 1` along rows, then columns; windows are
/// truncated at the edges.
fn box_blur(v: &mut [f64], nrows: usize, ncols: usize, r: usize) {
    fn blur_line(line: &[f64], out: &mut [f64], r: usize) {
        let n = line.len();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for &x in line {
            prefix.push(prefix.last().unwrap() + x);
        }
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(n);
            *o = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        }
    }
    let mut tmp = vec![0.0; ncols];
    for row in v.chunks_mut(ncols) {
        blur_line(row, &mut tmp, r);
        row.copy_from_slice(&tmp);
    }
    let mut col = vec![0.0; nrows];
    let mut out = vec![0.0; nrows];
    for c in 0..ncols {
        for r_ in 0..nrows {
            col[r_] = v[r_ * ncols + c];
        }
        blur_line(&col, &mut out, r);
        for r_ in 0..nrows {
            v[r_ * ncols + c] = out[r_];
        }
    }
}

/// Spatially correlated noise with correlation length near `radius` cells.
fn smooth_field(seed: u64, nrows: usize, ncols: usize, radius: usize) -> Vec<f64> {
    let mut v = white_noise(seed, nrows, ncols);
    if radius > 0 {
        for _ in 0..3 {
            box_blur(&mut v, nrows, ncols, radius);
        }
    }
    v
}

/// Splits `cells` into consecutive groups of the given fractions after
/// sorting them by `field` (index as the tie-break).
fn split_by_quantiles(cells: &mut [usize], field: &[f64], fractions: &[f64]) -> Vec<std::ops::Range<usize>> {
    cells.sort_unstable_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
    let n = cells.len();
    let total: f64 = fractions.iter().sum();
    let mut out = Vec::with_capacity(fractions.len());
    let mut cum = 0.0;
    let mut start = 0;
    for (i, f) in fractions.iter().enumerate() {
        cum += f;
        let end = if i + 1 == fractions.len() || total <= 0.0 {
            n
        } else {
            ((cum / total) * n as f64).round() as usize
        };
        out.push(start..end.max(start));
        start = end.max(start);
    }
    out
}

pub fn generate_landscape(config: &LandscapeConfig) -> Result<Landscape> {
    config.validate()?;
    let spec = config.spec();
    let (nrows, ncols) = (config.nrows, config.ncols);
    let bounds = config.stratum_row_bounds()?;
    let radius = (config.patch_scale_m / config.cell_size / 2.0).floor() as usize;
    let forest_field = smooth_field(mix64(config.seed ^ FOREST_FIELD), nrows, ncols, radius);
    let species_field = smooth_field(mix64(config.seed ^ SPECIES_FIELD), nrows, ncols, radius);

    let codes_of: Vec<u8> = LANDSCAPE_CLASSES.iter().map(|d| d.code().expect("map label")).collect();
    let mut truth = vec![0u8; nrows * ncols];
    let mut strata = vec![0u8; nrows * ncols];
    for (h, s) in config.strata.iter().enumerate() {
        let range = bounds[h] * ncols..bounds[h + 1] * ncols;
        strata[range.clone()].fill(h as u8 + 1);
        let mut cells: Vec<usize> = range.collect();
        let parts = split_by_quantiles(&mut cells, &forest_field, &[s.mixture[3], 1.0 - s.mixture[3]]);
        for &i in &cells[parts[0].clone()] {
            truth[i] = codes_of[3];
        }
        let forest = &mut cells[parts[1].clone()];
        let species = split_by_quantiles(forest, &species_field, &s.mixture[..3]);
        for (k, part) in species.into_iter().enumerate() {
            for &i in &forest[part] {
                truth[i] = codes_of[k];
            }
        }
    }

    let class_index = |code: u8| codes_of.iter().position(|&c| c == code).expect("landscape code");
    let p = config.band_names.len();
    let mut band_values = vec![vec![0.0; nrows * ncols]; p];
    {
        let noise_seed = mix64(config.seed ^ FEATURE_NOISE);
        let mut row_slices: Vec<Vec<&mut [f64]>> = (0..nrows).map(|_| Vec::with_capacity(p)).collect();
        for band in band_values.iter_mut() {
            for (r, chunk) in band.chunks_mut(ncols).enumerate() {
                row_slices[r].push(chunk);
            }
        }
        row_slices.par_iter_mut().enumerate().for_each(|(r, bands)| {
            let mut rng = SplitMix64::for_stream(noise_seed, r as u64);
            for c in 0..ncols {
                let k = class_index(truth[r * ncols + c]);
                for (b, band) in bands.iter_mut().enumerate() {
                    band[c] = config.class_means[k][b] + config.noise_sd * rng.normal();
                }
            }
        });
    }
    let bands = band_values
        .into_iter()
        .map(|v| RasterGrid::new(spec, -9999.0, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Landscape {
        truth: ClassMap::new(spec, truth, domain_legend())?,
        strata: ClassMap::new(spec, strata, stratum_legend(config.strata.len()))?,
        features: BandSet::new(config.band_names.clone(), bands)?,
    })
}

/// Cell counts of each map code inside each stratum code.
pub fn counts_by_stratum(map: &ClassMap, strata: &ClassMap) -> Result<std::collections::BTreeMap<u8, [u64; 256]>> {
    map.spec.ensure_same(&strata.spec, "stratum map")?;
    let mut out = std::collections::BTreeMap::new();
    for (&m, &s) in map.codes.iter().zip(&strata.codes) {
        if s == crate::domain::NODATA_CODE {
            continue;
        }
        out.entry(s).or_insert([0u64; 256])[m as usize] += 1;
    }
    Ok(out)
}
