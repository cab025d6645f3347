//! Tabular file formats and atomic output.
//!
//! All tables are UTF-8 CSV with a mandatory header row and `.` as the
//! decimal separator. Column names are matched case-insensitively; errors
//! name the file and line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::estimation::{Estimate, Method, SamplePlot, Stratum};
use crate::geostat::KrigingObservation;
use crate::smallarea::{SubPopulation, SubStratum};

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| Error::input(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// A parsed CSV file kept in memory.
pub struct Table {
    path: PathBuf,
    headers: Vec<String>,
    /// `(line, fields)` per data record.
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let csv_err = |e: csv::Error| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::format(path, line, e.to_string())
        };
        let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.to_ascii_lowercase()).collect();
        if headers.iter().all(|h| h.is_empty()) {
            return Err(Error::format(path, 1, "missing header row"));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| Error::format(&self.path, 1, format!("required column '{name}' is missing")))
    }

    pub fn error(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::format(&self.path, line, msg)
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[String])> {
        self.rows.iter().map(|(l, r)| (*l, r.as_slice()))
    }

    pub fn parse_f64(&self, line: usize, row: &[String], col: usize) -> Result<f64> {
        let v = &row[col];
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.error(line, format!("column '{}': '{v}' is not a finite number", self.headers[col])))
    }

    pub fn parse_u32(&self, line: usize, row: &[String], col: usize) -> Result<u32> {
        let v = &row[col];
        v.parse::<u32>()
            .map_err(|_| self.error(line, format!("column '{}': '{v}' is not a non-negative integer", self.headers[col])))
    }

    pub fn parse_domain(&self, line: usize, row: &[String], col: usize) -> Result<Domain> {
        row[col]
            .parse::<Domain>()
            .map_err(|e| self.error(line, format!("column '{}': {e}", self.headers[col])))
    }

    /// Empty cells are `None`.
    pub fn parse_opt_domain(&self, line: usize, row: &[String], col: Option<usize>) -> Result<Option<Domain>> {
        match col {
            Some(c) if !row[c].is_empty() => self.parse_domain(line, row, c).map(Some),
            _ => Ok(None),
        }
    }

    /// Columns named `mapped_<label>_km2`, with their domain.
    fn mapped_columns(&self) -> Result<Vec<(usize, Domain)>> {
        self.headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| Some((i, h.strip_prefix("mapped_")?.strip_suffix("_km2")?)))
            .map(|(i, label)| {
                let d = label.parse::<Domain>().map_err(|e| self.error(1, format!("column '{}': {e}", self.headers[i])))?;
                Ok((i, d))
            })
            .collect()
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "t" | "y" => Some(true),
        "0" | "false" | "no" | "f" | "n" | "" => Some(false),
        _ => None,
    }
}

/// Known plot columns; every other column is a feature.
pub const PLOT_COLUMNS: [&str; 9] = [
    "plot_id",
    "x",
    "y",
    "stratum_id",
    "observed",
    "predicted",
    "predicted_exact_mask",
    "weight_km2",
    "in_model_set",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub plots: Vec<SamplePlot>,
    pub feature_names: Vec<String>,
}

pub fn parse_plots(text: &str, path: &Path) -> Result<PlotTable> {
    let t = Table::parse(text, path)?;
    let id = t.require("plot_id")?;
    let x = t.require("x")?;
    let y = t.require("y")?;
    let stratum = t.require("stratum_id")?;
    let observed = t.require("observed")?;
    let weight = t.require("weight_km2")?;
    let predicted = t.column("predicted");
    let exact = t.column("predicted_exact_mask");
    let model = t.column("in_model_set");
    let features: Vec<usize> = (0..t.headers.len()).filter(|&i| !PLOT_COLUMNS.contains(&t.headers[i].as_str())).collect();
    let mut seen = BTreeSet::new();
    let mut plots = Vec::with_capacity(t.rows.len());
    for (line, row) in t.rows() {
        let pid = row[id].clone();
        if pid.is_empty() {
            return Err(t.error(line, "empty plot_id"));
        }
        if !seen.insert(pid.clone()) {
            return Err(t.error(line, format!("duplicate plot_id '{pid}'")));
        }
        let w = t.parse_f64(line, row, weight)?;
        if w <= 0.0 {
            return Err(t.error(line, format!("weight_km2 must be positive, got {w}")));
        }
        let obs = t.parse_domain(line, row, observed)?;
        if obs == Domain::ForestTotal {
            return Err(t.error(line, "observed label must be a single class, not forest-total"));
        }
        let mut p = SamplePlot::new(pid, t.parse_u32(line, row, stratum)?, obs, w);
        p.x = t.parse_f64(line, row, x)?;
        p.y = t.parse_f64(line, row, y)?;
        p.predicted = t.parse_opt_domain(line, row, predicted)?;
        p.predicted_exact_mask = t.parse_opt_domain(line, row, exact)?;
        if let Some(c) = model {
            p.in_model_set = parse_bool(&row[c]).ok_or_else(|| t.error(line, format!("in_model_set: '{}' is not a boolean", row[c])))?;
        }
        p.predictors = features
            .iter()
            .map(|&c| if row[c].is_empty() { Ok(f64::NAN) } else { t.parse_f64(line, row, c) })
            .collect::<Result<_>>()?;
        plots.push(p);
    }
    Ok(PlotTable {
        plots,
        feature_names: features.iter().map(|&c| t.headers[c].clone()).collect(),
    })
}

pub fn read_plots(path: &Path) -> Result<PlotTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_plots(&text, path)
}

fn opt_label(d: Option<Domain>) -> &'static str {
    d.map(Domain::as_str).unwrap_or("")
}

/// Plot table in the same column layout [`read_plots`] accepts; missing
/// feature values are written as empty cells.
pub fn format_plots(table: &PlotTable) -> String {
    let mut s = PLOT_COLUMNS.join(",");
    for f in &table.feature_names {
        s.push(',');
        s.push_str(f);
    }
    s.push('\n');
    for p in &table.plots {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            p.id,
            p.x,
            p.y,
            p.stratum_id,
            p.observed,
            opt_label(p.predicted),
            opt_label(p.predicted_exact_mask),
            p.sampling_weight(),
            p.in_model_set
        );
        for v in &p.predictors {
            if v.is_nan() {
                s.push(',');
            } else {
                let _ = write!(s, ",{v}");
            }
        }
        s.push('\n');
    }
    s
}

/// A design stratum with the mapped area of each class inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumRow {
    pub stratum: Stratum,
    pub mapped: BTreeMap<Domain, f64>,
}

impl StratumRow {
    /// Mapped area of `target`; forest-total sums the forest classes when
    /// not given explicitly.
    pub fn mapped_area(&self, target: Domain) -> Option<f64> {
        SubStratum {
            stratum_id: self.stratum.id,
            area: self.stratum.area,
            mapped: self.mapped.clone(),
        }
        .mapped_area(target)
    }
}

/// Strata table: `stratum_id, area_km2`, optional `weight_km2`, and optional
/// `mapped_<label>_km2` columns.
pub fn parse_strata(text: &str, path: &Path) -> Result<Vec<StratumRow>> {
    let t = Table::parse(text, path)?;
    let id = t.require("stratum_id")?;
    let area = t.require("area_km2")?;
    let weight = t.column("weight_km2");
    let mapped = t.mapped_columns()?;
    let mut out: Vec<StratumRow> = Vec::new();
    for (line, row) in t.rows() {
        let sid = t.parse_u32(line, row, id)?;
        if out.iter().any(|s| s.stratum.id == sid) {
            return Err(t.error(line, format!("stratum {sid} listed twice")));
        }
        let a = t.parse_f64(line, row, area)?;
        if a < 0.0 {
            return Err(t.error(line, format!("area_km2 must be ≥ 0, got {a}")));
        }
        let w = match weight {
            Some(c) if !row[c].is_empty() => t.parse_f64(line, row, c)?,
            _ => f64::NAN,
        };
        let mut m = BTreeMap::new();
        for &(c, d) in &mapped {
            if !row[c].is_empty() {
                let v = t.parse_f64(line, row, c)?;
                if !(0.0..=a * (1.0 + 1e-9)).contains(&v) {
                    return Err(t.error(line, format!("mapped {d} area {v} km² outside [0, {a}]")));
                }
                m.insert(d, v);
            }
        }
        out.push(StratumRow {
            stratum: Stratum::new(sid, a, w),
            mapped: m,
        });
    }
    Ok(out)
}

pub fn read_strata(path: &Path) -> Result<Vec<StratumRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_strata(&text, path)
}

/// Sub-population table (`subpop_id, stratum_id, area_km2`, then
/// `mapped_<label>_km2` columns) joined with a membership table
/// (`plot_id, subpop_id`). Sub-populations keep first-appearance order.
pub fn parse_subpops(defs: &str, defs_path: &Path, membership: &str, membership_path: &Path) -> Result<Vec<SubPopulation>> {
    let t = Table::parse(defs, defs_path)?;
    let sp = t.require("subpop_id")?;
    let sid = t.require("stratum_id")?;
    let area = t.require("area_km2")?;
    let mapped = t.mapped_columns()?;
    let mut out: Vec<SubPopulation> = Vec::new();
    for (line, row) in t.rows() {
        let id = row[sp].clone();
        if id.is_empty() {
            return Err(t.error(line, "empty subpop_id"));
        }
        let stratum_id = t.parse_u32(line, row, sid)?;
        let a = t.parse_f64(line, row, area)?;
        let mut m = BTreeMap::new();
        for &(c, d) in &mapped {
            if !row[c].is_empty() {
                m.insert(d, t.parse_f64(line, row, c)?);
            }
        }
        let idx = match out.iter().position(|s| s.id == id) {
            Some(i) => i,
            None => {
                out.push(SubPopulation {
                    id: id.clone(),
                    strata: Vec::new(),
                    plot_ids: BTreeSet::new(),
                });
                out.len() - 1
            }
        };
        if out[idx].strata.iter().any(|s| s.stratum_id == stratum_id) {
            return Err(t.error(line, format!("sub-population {id}: stratum {stratum_id} listed twice")));
        }
        out[idx].strata.push(SubStratum {
            stratum_id,
            area: a,
            mapped: m,
        });
    }
    let mt = Table::parse(membership, membership_path)?;
    let pid = mt.require("plot_id")?;
    let msp = mt.require("subpop_id")?;
    for (line, row) in mt.rows() {
        let s = out
            .iter_mut()
            .find(|s| s.id == row[msp])
            .ok_or_else(|| mt.error(line, format!("unknown subpop_id '{}'", row[msp])))?;
        if !s.plot_ids.insert(row[pid].clone()) {
            return Err(mt.error(line, format!("plot {} listed twice for sub-population {}", row[pid], s.id)));
        }
    }
    Ok(out)
}

pub fn read_subpops(defs: &Path, membership: &Path) -> Result<Vec<SubPopulation>> {
    let d = fs::read_to_string(defs).map_err(|e| Error::io(defs, e))?;
    let m = fs::read_to_string(membership).map_err(|e| Error::io(membership, e))?;
    parse_subpops(&d, defs, &m, membership)
}

/// Kriging observations: `x, y, response`, optional `covariate`
/// (NaN when absent, to be filled from a covariate raster).
pub fn parse_observations(text: &str, path: &Path) -> Result<Vec<KrigingObservation>> {
    let t = Table::parse(text, path)?;
    let (x, y, r) = (t.require("x")?, t.require("y")?, t.require("response")?);
    let cov = t.column("covariate");
    t.rows()
        .map(|(line, row)| {
            Ok(KrigingObservation {
                x: t.parse_f64(line, row, x)?,
                y: t.parse_f64(line, row, y)?,
                response: t.parse_f64(line, row, r)?,
                covariate: match cov {
                    Some(c) => t.parse_f64(line, row, c)?,
                    None => f64::NAN,
                },
            })
        })
        .collect()
}

pub fn read_observations(path: &Path) -> Result<Vec<KrigingObservation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_observations(&text, path)
}

pub const ESTIMATE_CSV_HEADER: &str =
    "domain,method,total_km2,variance,se,cv,correction,synthetic,re,variance_status";

fn opt_f64(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn status_text(e: &Estimate) -> String {
    match &e.status {
        crate::estimation::VarianceStatus::Complete => "complete".into(),
        crate::estimation::VarianceStatus::Partial { missing_strata } => {
            let ids: Vec<String> = missing_strata.iter().map(u32::to_string).collect();
            format!("partial:{}", ids.join(";"))
        }
    }
}

/// One CSV row per estimate at full precision.
pub fn format_estimates(rows: &[(Method, Domain, Estimate)]) -> String {
    let mut s = format!("{ESTIMATE_CSV_HEADER}\n");
    for (m, d, e) in rows {
        let _ = writeln!(
            s,
            "{d},{m},{},{},{},{},{},{},{},{}",
            e.total,
            e.variance,
            e.se,
            opt_f64(e.cv),
            opt_f64(e.correction),
            opt_f64(e.synthetic),
            e.relative_efficiency.map(|r| r.to_string()).unwrap_or_default(),
            status_text(e)
        );
    }
    s
}

/// Human-readable table; percentages rounded to 0.1.
pub fn format_estimate_summary(rows: &[(Method, Domain, Estimate)]) -> String {
    let mut s = format!("{:<7}{:<13}{:>12}{:>11}{:>8}{:>9}\n", "method", "domain", "total km²", "SE km²", "CV %", "RE");
    for (m, d, e) in rows {
        let cv = e.cv.map(|v| format!("{:.1}", 100.0 * v)).unwrap_or_else(|| "-".into());
        let re = match e.relative_efficiency {
            Some(crate::estimation::RelativeEfficiency::Finite(v)) => format!("{v:.2}"),
            Some(r) => r.to_string(),
            None => "-".into(),
        };
        let _ = writeln!(s, "{:<7}{:<13}{:>12.2}{:>11.2}{:>8}{:>9}", m.as_str(), d.as_str(), e.total, e.se, cv, re);
    }
    s
}
