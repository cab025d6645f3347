//! Flat `key = value` configuration of a simulation run.
//!
//! ```text
//! # landscape
//! seed = 1
//! nrows = 1000
//! ncols = 1000
//! cell_size = 30
//! patch_scale = 600
//! strata = 0.4, 0.3, 0.2, 0.1
//! mixture.1 = 0.30, 0.20, 0.10, 0.40   # spruce, pine, deciduous, non-forest
//! bands = b1, b2, b3, b4
//! mean.spruce = 1, 0, 0, 0.5
//! noise_sd = 0.5
//! # sampling and Monte Carlo
//! replicates = 1000
//! design = srs                          # or systematic
//! plots_per_stratum = 50                # one value, or one per stratum
//! map = noisy:0.8                       # perfect, random, noisy:<acc>, forest
//! map_ntrees = 100
//! map_training_plots = 2000
//! mc_seed = 7
//! ```
//!
//! Keys not given keep the defaults of [`LandscapeConfig::default`] and
//! [`SimulationConfig::default`]. `strata` must come before `mixture.*`.

use std::collections::BTreeMap;
use std::path::Path;

use super::landscape::{generate_landscape, LandscapeConfig, StratumConfig, LANDSCAPE_CLASSES};
use super::montecarlo::{build_map, monte_carlo, MapSource, McParams, McReport};
use super::sampling::Design;
use crate::domain::Domain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub landscape: LandscapeConfig,
    pub replicates: usize,
    pub design: Design,
    /// One count for every stratum, or one per stratum.
    pub plots_per_stratum: Vec<usize>,
    pub map: MapSource,
    pub mc_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            landscape: LandscapeConfig::default(),
            replicates: 1000,
            design: Design::StratifiedSrs,
            plots_per_stratum: vec![50],
            map: MapSource::Noisy { accuracy: 0.8 },
            mc_seed: 7,
        }
    }
}

fn list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|x| x.trim().parse().ok()).collect()
}

impl SimulationConfig {
    /// Parses the text of a config file; `origin` names it in errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = SimulationConfig::default();
        let mut ntrees = None;
        let mut training = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::format(origin, i + 1, msg);
            let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
            let num = |what: &str| -> Result<f64> {
                value.parse::<f64>().map_err(|_| bad(format!("{what} must be a number, got '{value}'")))
            };
            let int = |what: &str| -> Result<usize> {
                value.parse::<usize>().map_err(|_| bad(format!("{what} must be a non-negative integer, got '{value}'")))
            };
            let floats = |what: &str| -> Result<Vec<f64>> {
                list(value).ok_or_else(|| bad(format!("{what} must be a comma-separated list of numbers, got '{value}'")))
            };
            let l = &mut cfg.landscape;
            match key.as_str() {
                "seed" => l.seed = value.parse().map_err(|_| bad(format!("seed must be an unsigned integer, got '{value}'")))?,
                "nrows" => l.nrows = int("nrows")?,
                "ncols" => l.ncols = int("ncols")?,
                "cell_size" => l.cell_size = num("cell_size")?,
                "patch_scale" => l.patch_scale_m = num("patch_scale")?,
                "noise_sd" => l.noise_sd = num("noise_sd")?,
                "strata" => {
                    let f = floats("strata")?;
                    let old = std::mem::take(&mut l.strata);
                    l.strata = f
                        .into_iter()
                        .enumerate()
                        .map(|(h, fraction)| StratumConfig {
                            fraction,
                            mixture: old.get(h).or(old.last()).map(|s| s.mixture).unwrap_or([0.25; 4]),
                        })
                        .collect();
                }
                "bands" => {
                    l.band_names = value.split(',').map(|s| s.trim().to_string()).collect();
                }
                "replicates" => cfg.replicates = int("replicates")?,
                "design" => cfg.design = value.parse().map_err(|e: Error| bad(e.to_string()))?,
                "plots_per_stratum" => {
                    cfg.plots_per_stratum =
                        list(value).ok_or_else(|| bad(format!("plots_per_stratum must be integers, got '{value}'")))?
                }
                "map" => cfg.map = value.parse().map_err(|e: Error| bad(e.to_string()))?,
                "map_ntrees" => ntrees = Some(int("map_ntrees")?),
                "map_training_plots" => training = Some(int("map_training_plots")?),
                "mc_seed" => cfg.mc_seed = value.parse().map_err(|_| bad(format!("mc_seed must be an unsigned integer, got '{value}'")))?,
                k if k.starts_with("mixture.") => {
                    let h: usize = k["mixture.".len()..].parse().map_err(|_| bad(format!("bad stratum number in '{k}'")))?;
                    let m = floats(k)?;
                    let s = l
                        .strata
                        .get_mut(h.wrapping_sub(1))
                        .ok_or_else(|| bad(format!("'{k}' names a stratum that 'strata' does not define")))?;
                    s.mixture = m.try_into().map_err(|_| bad(format!("'{k}' needs 4 fractions")))?;
                }
                k if k.starts_with("mean.") => {
                    let d: Domain = k["mean.".len()..].parse().map_err(|e: Error| bad(e.to_string()))?;
                    let c = LANDSCAPE_CLASSES
                        .iter()
                        .position(|&x| x == d)
                        .ok_or_else(|| bad(format!("'{k}': landscapes have no {d} class")))?;
                    l.class_means[c] = floats(k)?;
                }
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        if let MapSource::Forest { ntrees: t, training_plots: p } = &mut cfg.map {
            *t = ntrees.unwrap_or(*t);
            *p = training.unwrap_or(*p);
        }
        cfg.landscape.validate().map_err(|e| Error::input(format!("{}: {e}", origin.display())))?;
        cfg.n_per_stratum()?;
        Ok(cfg)
    }

    pub fn n_per_stratum(&self) -> Result<BTreeMap<u32, usize>> {
        let h = self.landscape.strata.len();
        match self.plots_per_stratum.len() {
            1 => Ok((1..=h as u32).map(|s| (s, self.plots_per_stratum[0])).collect()),
            n if n == h => Ok((1..=h as u32).zip(self.plots_per_stratum.iter().copied()).collect()),
            n => Err(Error::input(format!("plots_per_stratum has {n} values for {h} strata"))),
        }
    }

    pub fn mc_params(&self) -> Result<McParams> {
        Ok(McParams::new(self.replicates, self.design, self.n_per_stratum()?, self.mc_seed))
    }
}

/// Generates the landscape, builds the map and runs the Monte Carlo study.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<McReport> {
    let landscape = generate_landscape(&cfg.landscape)?;
    let map = build_map(&landscape, &cfg.map, cfg.mc_seed)?;
    monte_carlo(&landscape, &map, &cfg.mc_params()?)
}
