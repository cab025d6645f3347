//! Stratified plot samples drawn from a landscape.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::domain::{Domain, NODATA_CODE};
use crate::error::{Error, Result};
use crate::estimation::{SamplePlot, Stratum};
use crate::raster::{ClassMap, GridSpec};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    /// Simple random sample of cells without replacement in each stratum.
    StratifiedSrs,
    /// Square grid with a random offset in each stratum; the realized plot
    /// count is close to, but not always exactly, the requested one.
    StratifiedSystematic,
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "srs" | "stratified-srs" => Ok(Design::StratifiedSrs),
            "systematic" | "stratified-systematic" => Ok(Design::StratifiedSystematic),
            other => Err(Error::input(format!("unknown sampling design '{other}'"))),
        }
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Design::StratifiedSrs => "stratified-srs",
            Design::StratifiedSystematic => "stratified-systematic",
        })
    }
}

#[derive(Debug, Clone)]
struct FrameStratum {
    id: u8,
    /// Cell indices in row-major order.
    cells: Vec<u32>,
    /// Bounding box rows and columns, inclusive.
    rows: (usize, usize),
    cols: (usize, usize),
}

/// Cell lists of every stratum, built once and reused across draws.
#[derive(Debug, Clone)]
pub struct SamplingFrame {
    spec: GridSpec,
    strata_codes: Vec<u8>,
    strata: Vec<FrameStratum>,
}

impl SamplingFrame {
    pub fn new(strata: &ClassMap) -> Self {
        let spec = strata.spec;
        let mut by_code: BTreeMap<u8, FrameStratum> = BTreeMap::new();
        for (i, &s) in strata.codes.iter().enumerate() {
            if s == NODATA_CODE {
                continue;
            }
            let (r, c) = (i / spec.ncols, i % spec.ncols);
            let e = by_code.entry(s).or_insert(FrameStratum {
                id: s,
                cells: Vec::new(),
                rows: (r, r),
                cols: (c, c),
            });
            e.cells.push(i as u32);
            e.rows.1 = r;
            e.cols = (e.cols.0.min(c), e.cols.1.max(c));
        }
        Self {
            spec,
            strata_codes: strata.codes.clone(),
            strata: by_code.into_values().collect(),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn stratum_ids(&self) -> Vec<u32> {
        self.strata.iter().map(|s| s.id as u32).collect()
    }

    /// Stratum areas in km², by id.
    pub fn areas(&self) -> BTreeMap<u32, f64> {
        let a = self.spec.cell_area_km2();
        self.strata.iter().map(|s| (s.id as u32, s.cells.len() as f64 * a)).collect()
    }

    fn draw_cells(&self, s: &FrameStratum, design: Design, n: usize, rng: &mut SplitMix64) -> Vec<u32> {
        match design {
            Design::StratifiedSrs => {
                let mut picked: Vec<u32> = rng.sample_indices(s.cells.len(), n).into_iter().map(|i| s.cells[i]).collect();
                picked.sort_unstable();
                picked
            }
            Design::StratifiedSystematic => {
                let d = (s.cells.len() as f64 / n as f64).sqrt();
                let oy = rng.next_f64() * d;
                let ox = rng.next_f64() * d;
                let mut picked = Vec::new();
                let mut y = s.rows.0 as f64 + oy;
                while y < (s.rows.1 + 1) as f64 {
                    let r = y as usize;
                    let mut x = s.cols.0 as f64 + ox;
                    while x < (s.cols.1 + 1) as f64 {
                        let i = r * self.spec.ncols + x as usize;
                        if self.strata_codes[i] == s.id {
                            picked.push(i as u32);
                        }
                        x += d;
                    }
                    y += d;
                }
                picked
            }
        }
    }

    /// Draws `n_per_stratum[h]` plots in every stratum and labels them from
    /// `truth`. Returns the plots (inclusion probabilities `n_h / A_h` from
    /// the realized counts) and the matching strata.
    pub fn draw(
        &self,
        truth: &ClassMap,
        design: Design,
        n_per_stratum: &BTreeMap<u32, usize>,
        rng: &mut SplitMix64,
    ) -> Result<(Vec<SamplePlot>, Vec<Stratum>)> {
        self.spec.ensure_same(&truth.spec, "truth map")?;
        let cell_area = self.spec.cell_area_km2();
        let mut plots = Vec::new();
        let mut strata = Vec::with_capacity(self.strata.len());
        for s in &self.strata {
            let id = s.id as u32;
            let n = *n_per_stratum
                .get(&id)
                .ok_or_else(|| Error::input(format!("no plot count given for stratum {id}")))?;
            if n == 0 || n > s.cells.len() {
                return Err(Error::input(format!(
                    "stratum {id}: cannot draw {n} plots from {} cells",
                    s.cells.len()
                )));
            }
            let cells = self.draw_cells(s, design, n, rng);
            let area = s.cells.len() as f64 * cell_area;
            let stratum = Stratum::from_count(id, area, cells.len());
            for &i in &cells {
                let i = i as usize;
                let (r, c) = (i / self.spec.ncols, i % self.spec.ncols);
                let observed = Domain::from_code(truth.codes[i])
                    .ok_or_else(|| Error::input(format!("truth map cell ({r}, {c}) has no label")))?;
                let mut p = SamplePlot::new(format!("c{i:010}"), id, observed, stratum.sampling_weight);
                (p.x, p.y) = self.spec.cell_center(r, c);
                plots.push(p);
            }
            strata.push(stratum);
        }
        Ok((plots, strata))
    }
}

/// One stratified sample from a truth map and stratum map.
pub fn draw_sample(
    truth: &ClassMap,
    strata: &ClassMap,
    design: Design,
    n_per_stratum: &BTreeMap<u32, usize>,
    seed: u64,
) -> Result<(Vec<SamplePlot>, Vec<Stratum>)> {
    SamplingFrame::new(strata).draw(truth, design, n_per_stratum, &mut SplitMix64::new(seed))
}

/// Sets each plot's map prediction from the map cell under its center.
pub fn attach_predictions(plots: &mut [SamplePlot], map: &ClassMap) -> Result<()> {
    for p in plots {
        let (r, c) = map
            .spec
            .cell_at(p.x, p.y)
            .ok_or_else(|| Error::input(format!("plot {} lies outside the map", p.id)))?;
        let code = map.code(r, c);
        p.predicted = Some(
            Domain::from_code(code).ok_or_else(|| Error::input(format!("map cell under plot {} has code {code}", p.id)))?,
        );
    }
    Ok(())
}
