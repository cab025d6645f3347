//! Repeated sampling from one fixed landscape.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::landscape::{counts_by_stratum, Landscape, LANDSCAPE_CLASSES};
use super::sampling::{attach_predictions, Design, SamplingFrame};
use crate::classifier::{Dataset, Forest, TrainParams};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::estimation::{estimate, Method, RelativeEfficiency, VariancePolicy};
use crate::raster::{domain_legend, mask_legend, predict_map, ClassMap, DEFAULT_TILE_SIZE};
use crate::rng::{mix64, SplitMix64};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

const MAP_STREAM: u64 = 0x4d41_50;

/// Where the map used by the map-based estimators comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MapSource {
    /// The truth map itself.
    Perfect,
    /// Labels drawn independently of the truth from its class fractions.
    RandomLabels,
    /// Each cell keeps its true label with probability `accuracy`, otherwise
    /// takes one of the other landscape classes uniformly.
    Noisy { accuracy: f64 },
    /// Random forest trained on `training_plots` random cells, then applied
    /// to every cell.
    Forest { ntrees: usize, training_plots: usize },
}

impl std::str::FromStr for MapSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.split_once(':') {
            None if s == "perfect" => Ok(MapSource::Perfect),
            None if s == "random" => Ok(MapSource::RandomLabels),
            None if s == "forest" => Ok(MapSource::Forest { ntrees: 100, training_plots: 2000 }),
            Some(("noisy", a)) => {
                let accuracy: f64 = a.parse().map_err(|_| Error::input(format!("bad accuracy in map source '{s}'")))?;
                Ok(MapSource::Noisy { accuracy })
            }
            _ => Err(Error::input(format!("unknown map source '{s}' (perfect, random, noisy:<accuracy>, forest)"))),
        }
    }
}

/// Builds the map for `source`. Deterministic in `seed`.
pub fn build_map(landscape: &Landscape, source: &MapSource, seed: u64) -> Result<ClassMap> {
    let truth = &landscape.truth;
    let codes: Vec<u8> = LANDSCAPE_CLASSES.iter().map(|d| d.code().expect("map label")).collect();
    let seed = mix64(seed ^ MAP_STREAM);
    let ncols = truth.spec.ncols;
    let per_row = |f: &(dyn Fn(&mut SplitMix64, u8) -> u8 + Sync)| -> Result<ClassMap> {
        let mut out = truth.codes.clone();
        out.par_chunks_mut(ncols).enumerate().for_each(|(r, row)| {
            let mut rng = SplitMix64::for_stream(seed, r as u64);
            row.iter_mut().for_each(|c| *c = f(&mut rng, *c));
        });
        ClassMap::new(truth.spec, out, domain_legend())
    };
    match *source {
        MapSource::Perfect => Ok(truth.clone()),
        MapSource::RandomLabels => {
            let h = truth.histogram();
            let mut cum = Vec::with_capacity(codes.len());
            let mut acc = 0u64;
            for &c in &codes {
                acc += h[c as usize];
                cum.push(acc);
            }
            per_row(&|rng, _| {
                let u = rng.below(acc);
                codes[cum.iter().position(|&c| u < c).expect("u below total")]
            })
        }
        MapSource::Noisy { accuracy } => {
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(Error::input(format!("noisy map accuracy must lie in [0, 1], got {accuracy}")));
            }
            per_row(&|rng, c| {
                if rng.next_f64() < accuracy {
                    return c;
                }
                let j = rng.below_usize(codes.len() - 1);
                codes.iter().copied().filter(|&o| o != c).nth(j).unwrap_or(c)
            })
        }
        MapSource::Forest { ntrees, training_plots } => {
            let spec = truth.spec;
            let n = spec.n_cells();
            if training_plots < 2 || training_plots > n {
                return Err(Error::input(format!("training plot count {training_plots} outside 2..={n}")));
            }
            let mut rng = SplitMix64::new(seed);
            let cells = rng.sample_indices(n, training_plots);
            let bands = &landscape.features;
            let rows: Vec<Vec<f64>> = cells.iter().map(|&i| bands.bands.iter().map(|b| b.values[i]).collect()).collect();
            let labels: Vec<Domain> = cells
                .iter()
                .map(|&i| Domain::from_code(truth.codes[i]).ok_or_else(|| Error::input("truth map cell has no label")))
                .collect::<Result<_>>()?;
            let data = Dataset::new(bands.names.clone(), rows, &labels)?;
            let forest = Forest::train(&data, &TrainParams::default().with_ntrees(ntrees).with_seed(rng.next_u64()), None)?;
            let mask = ClassMap::filled(spec, 1, mask_legend())?;
            predict_map(bands, &mask, &forest, DEFAULT_TILE_SIZE)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McParams {
    pub replicates: usize,
    pub design: Design,
    pub n_per_stratum: BTreeMap<u32, usize>,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub targets: Vec<Domain>,
}

impl McParams {
    /// Minimum replicate count accepted by [`monte_carlo`].
    pub const MIN_REPLICATES: usize = 100;

    pub fn new(replicates: usize, design: Design, n_per_stratum: BTreeMap<u32, usize>, seed: u64) -> Self {
        Self {
            replicates,
            design,
            n_per_stratum,
            seed,
            methods: Method::ALL.to_vec(),
            targets: vec![Domain::Spruce, Domain::Pine, Domain::Deciduous, Domain::NonForest, Domain::ForestTotal],
        }
    }
}

/// Summary for one estimator and domain over all replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub method: Method,
    pub target: Domain,
    /// True area, km².
    pub census: f64,
    /// Replicates where the estimator produced a total and a variance.
    pub used: usize,
    /// Replicates where it was inapplicable (empty or singleton group).
    pub skipped: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Monte Carlo standard error of `mean_estimate`.
    pub mc_se: f64,
    pub empirical_variance: f64,
    pub mean_estimated_variance: f64,
    /// `mean_estimated_variance / empirical_variance`; `None` when the
    /// estimates do not vary.
    pub variance_ratio: Option<f64>,
    /// Share of replicates whose `±Z95·SE` interval covers the census.
    pub coverage: f64,
    /// Mean of finite per-replicate relative efficiencies (map-based
    /// estimators only).
    pub mean_re: Option<f64>,
    pub re_infinite: usize,
    pub re_undefined: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub replicates: usize,
    pub design: Design,
    pub rows: Vec<McRow>,
}

pub const MC_CSV_HEADER: &str = "method,domain,census_km2,used,skipped,mean_estimate_km2,bias_km2,mc_se_km2,\
empirical_variance,mean_estimated_variance,variance_ratio,coverage,mean_re,re_infinite,re_undefined";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl McReport {
    pub fn row(&self, method: Method, target: Domain) -> Option<&McRow> {
        self.rows.iter().find(|r| r.method == method && r.target == target)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(MC_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.target,
                r.census,
                r.used,
                r.skipped,
                r.mean_estimate,
                r.bias,
                r.mc_se,
                r.empirical_variance,
                r.mean_estimated_variance,
                opt(r.variance_ratio),
                r.coverage,
                opt(r.mean_re),
                r.re_infinite,
                r.re_undefined
            );
        }
        s
    }

    /// Fixed-width table with percentages rounded to 0.1.
    pub fn summary(&self) -> String {
        let mut s = format!("Monte Carlo: {} replicates, {}\n", self.replicates, self.design);
        let _ = writeln!(
            s,
            "{:<7}{:<13}{:>12}{:>11}{:>10}{:>10}{:>10}{:>9}",
            "method", "domain", "census km²", "bias km²", "bias/SE", "var ratio", "coverage", "mean RE"
        );
        for r in &self.rows {
            let z = if r.mc_se > 0.0 { format!("{:.2}", r.bias / r.mc_se) } else { "-".into() };
            let ratio = r.variance_ratio.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            let re = match (r.mean_re, r.re_infinite) {
                (_, n) if n > 0 && n == r.used => "inf".to_string(),
                (Some(v), _) => format!("{v:.2}"),
                _ => "-".into(),
            };
            let _ = writeln!(
                s,
                "{:<7}{:<13}{:>12.2}{:>11.3}{:>10}{:>10}{:>9.1}%{:>9}",
                r.method.as_str(),
                r.target.as_str(),
                r.census,
                r.bias,
                z,
                ratio,
                100.0 * r.coverage,
                re
            );
            if r.skipped > 0 {
                let _ = writeln!(s, "        ({} of {} replicates skipped)", r.skipped, self.replicates);
            }
        }
        s
    }
}

type Outcome = Option<(f64, f64, Option<RelativeEfficiency>)>;

/// Draws `params.replicates` samples from the fixed landscape and runs every
/// estimator on each. Replicate `r` uses stream `r` of `params.seed`, so
/// the report does not depend on the thread count.
pub fn monte_carlo(landscape: &Landscape, map: &ClassMap, params: &McParams) -> Result<McReport> {
    if params.replicates < McParams::MIN_REPLICATES {
        return Err(Error::input(format!(
            "Monte Carlo needs at least {} replicates, got {}",
            McParams::MIN_REPLICATES,
            params.replicates
        )));
    }
    let frame = SamplingFrame::new(&landscape.strata);
    let cell_area = landscape.truth.spec.cell_area_km2();
    let truth_counts = counts_by_stratum(&landscape.truth, &landscape.strata)?;
    let map_counts = counts_by_stratum(map, &landscape.strata)?;
    let area_of = |counts: &BTreeMap<u8, [u64; 256]>, target: Domain| -> BTreeMap<u32, f64> {
        counts
            .iter()
            .map(|(&h, c)| (h as u32, target.codes().iter().map(|&k| c[k as usize]).sum::<u64>() as f64 * cell_area))
            .collect()
    };
    let mapped: Vec<BTreeMap<u32, f64>> = params.targets.iter().map(|&t| area_of(&map_counts, t)).collect();
    let census: Vec<f64> = params.targets.iter().map(|&t| area_of(&truth_counts, t).values().sum()).collect();

    let replicate = |r: usize| -> Result<Vec<Outcome>> {
        let mut rng = SplitMix64::for_stream(params.seed, r as u64);
        let (mut plots, strata) = frame.draw(&landscape.truth, params.design, &params.n_per_stratum, &mut rng)?;
        attach_predictions(&mut plots, map)?;
        let mut out = Vec::with_capacity(params.targets.len() * params.methods.len());
        for (t, &target) in params.targets.iter().enumerate() {
            for &method in &params.methods {
                out.push(match estimate(&plots, &strata, method, target, &mapped[t], VariancePolicy::Strict) {
                    Ok(e) => Some((e.total, e.variance, e.relative_efficiency)),
                    Err(Error::EmptyGroup { .. } | Error::VarianceUndefined(_)) => None,
                    Err(e) => return Err(e),
                });
            }
        }
        Ok(out)
    };
    let results = (0..params.replicates).into_par_iter().map(replicate).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (t, &target) in params.targets.iter().enumerate() {
        for (m, &method) in params.methods.iter().enumerate() {
            let k = t * params.methods.len() + m;
            let ok: Vec<(f64, f64, Option<RelativeEfficiency>)> = results.iter().filter_map(|r| r[k]).collect();
            rows.push(summarize(method, target, census[t], &ok, params.replicates));
        }
    }
    Ok(McReport {
        replicates: params.replicates,
        design: params.design,
        rows,
    })
}

fn summarize(method: Method, target: Domain, census: f64, ok: &[(f64, f64, Option<RelativeEfficiency>)], replicates: usize) -> McRow {
    let n = ok.len();
    let totals: Vec<f64> = ok.iter().map(|o| o.0).collect();
    let (mean, var) = crate::numeric::mean_and_sample_variance(&totals);
    let var = var.unwrap_or(0.0);
    let mean_var = if n > 0 { ok.iter().map(|o| o.1).sum::<f64>() / n as f64 } else { f64::NAN };
    let covered = ok.iter().filter(|o| (o.0 - census).abs() <= Z95 * o.1.sqrt()).count();
    let finite: Vec<f64> = ok.iter().filter_map(|o| o.2.and_then(RelativeEfficiency::value)).collect();
    McRow {
        method,
        target,
        census,
        used: n,
        skipped: replicates - n,
        mean_estimate: mean,
        bias: mean - census,
        mc_se: (var / n.max(1) as f64).sqrt(),
        empirical_variance: var,
        mean_estimated_variance: mean_var,
        variance_ratio: (var > 0.0).then(|| mean_var / var),
        coverage: if n > 0 { covered as f64 / n as f64 } else { 0.0 },
        mean_re: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        re_infinite: ok.iter().filter(|o| o.2 == Some(RelativeEfficiency::Infinite)).count(),
        re_undefined: ok.iter().filter(|o| o.2 == Some(RelativeEfficiency::Undefined)).count(),
    }
}
