//! Sampling-weighted confusion matrices and overall / producer's / user's
//! accuracies, plus stand-level validation.
//!
//! Orientation is fixed: rows are predictions, columns are the reference.
//! User's accuracy is therefore row-wise and producer's accuracy column-wise.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::estimation::SamplePlot;

pub const ORIENTATION_HEADER: &str = "# rows=prediction, columns=reference";

/// Which label of a plot to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelField {
    Observed,
    Predicted,
    PredictedExactMask,
}

impl LabelField {
    pub fn get(self, plot: &SamplePlot) -> Option<Domain> {
        match self {
            LabelField::Observed => Some(plot.observed),
            LabelField::Predicted => plot.predicted,
            LabelField::PredictedExactMask => plot.predicted_exact_mask,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelField::Observed => "observed",
            LabelField::Predicted => "predicted",
            LabelField::PredictedExactMask => "predicted_exact_mask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<Domain>,
    /// Row-major k×k; `cells[row * k + col]`, row = prediction.
    cells: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: Vec<Domain>) -> Self {
        let k = labels.len();
        Self {
            labels,
            cells: vec![0.0; k * k],
        }
    }

    /// Matrix from row-major cells (rows = prediction).
    pub fn from_cells(labels: Vec<Domain>, cells: Vec<f64>) -> Result<Self> {
        let k = labels.len();
        if cells.len() != k * k {
            return Err(Error::input(format!("expected {} cells for {k} labels, got {}", k * k, cells.len())));
        }
        if let Some(c) = cells.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::input(format!("confusion cells must be finite and ≥ 0, got {c}")));
        }
        Ok(Self { labels, cells })
    }

    pub fn labels(&self) -> &[Domain] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: Domain) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn cell(&self, predicted: usize, reference: usize) -> f64 {
        self.cells[predicted * self.k() + reference]
    }

    pub fn add(&mut self, predicted: Domain, reference: Domain, weight: f64) -> Result<()> {
        let k = self.k();
        let r = self
            .index_of(predicted)
            .ok_or_else(|| Error::input(format!("label {predicted} not in confusion labels")))?;
        let c = self
            .index_of(reference)
            .ok_or_else(|| Error::input(format!("label {reference} not in confusion labels")))?;
        self.cells[r * k + c] += weight;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::input("cannot merge confusion matrices with different labels"));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn row_total(&self, row: usize) -> f64 {
        let k = self.k();
        self.cells[row * k..(row + 1) * k].iter().sum()
    }

    pub fn col_total(&self, col: usize) -> f64 {
        (0..self.k()).map(|r| self.cell(r, col)).sum()
    }

    fn trace(&self) -> f64 {
        (0..self.k()).map(|i| self.cell(i, i)).sum()
    }

    /// Overall accuracy in [0, 1]; `None` for an empty matrix.
    pub fn oa(&self) -> Option<f64> {
        let total = self.total_weight();
        (total > 0.0).then(|| self.trace() / total)
    }

    /// User's accuracy (row-wise); `None` when nothing was predicted as `label`.
    pub fn ua(&self, label: Domain) -> Option<f64> {
        let i = self.index_of(label)?;
        let row = self.row_total(i);
        (row > 0.0).then(|| self.cell(i, i) / row)
    }

    /// Producer's accuracy (column-wise); `None` when `label` never occurs in
    /// the reference.
    pub fn pa(&self, label: Domain) -> Option<f64> {
        let i = self.index_of(label)?;
        let col = self.col_total(i);
        (col > 0.0).then(|| self.cell(i, i) / col)
    }

    /// Cells as percent of the total weight.
    pub fn percent(&self) -> Vec<f64> {
        let total = self.total_weight();
        self.cells.iter().map(|c| 100.0 * c / total).collect()
    }

    /// CSV with an orientation header, percent cells and margins rounded to
    /// 0.1. Undefined accuracies are left blank.
    pub fn to_percent_csv(&self) -> String {
        let mut out = String::new();
        let k = self.k();
        let pct = self.percent();
        let fmt = |v: Option<f64>| v.map(|v| format!("{:.1}", v * 100.0)).unwrap_or_default();
        writeln!(out, "{ORIENTATION_HEADER}").unwrap();
        let header: Vec<&str> = self.labels.iter().map(|l| l.as_str()).collect();
        writeln!(out, "prediction,{},users_accuracy", header.join(",")).unwrap();
        for r in 0..k {
            let row: Vec<String> = (0..k).map(|c| format!("{:.1}", pct[r * k + c])).collect();
            writeln!(out, "{},{},{}", self.labels[r], row.join(","), fmt(self.ua(self.labels[r]))).unwrap();
        }
        let pas: Vec<String> = self.labels.iter().map(|&l| fmt(self.pa(l))).collect();
        writeln!(out, "producers_accuracy,{},", pas.join(",")).unwrap();
        writeln!(out, "overall_accuracy,{}{}", ",".repeat(k), fmt(self.oa())).unwrap();
        out
    }

    /// CSV of raw summed weights at full precision.
    pub fn to_weights_csv(&self) -> String {
        let mut out = String::new();
        let k = self.k();
        writeln!(out, "{ORIENTATION_HEADER}").unwrap();
        let header: Vec<&str> = self.labels.iter().map(|l| l.as_str()).collect();
        writeln!(out, "prediction,{}", header.join(",")).unwrap();
        for r in 0..k {
            let row: Vec<String> = (0..k).map(|c| self.cell(r, c).to_string()).collect();
            writeln!(out, "{},{}", self.labels[r], row.join(",")).unwrap();
        }
        out
    }
}

/// Labels present in either field, in canonical class order.
fn labels_present(plots: &[SamplePlot], reference: LabelField, prediction: LabelField) -> Vec<Domain> {
    let mut labels: Vec<Domain> = plots
        .iter()
        .flat_map(|p| [reference.get(p), prediction.get(p)])
        .flatten()
        .collect();
    labels.sort();
    labels.dedup();
    labels
}

/// Confusion matrix in which each plot contributes its sampling weight
/// `1/π_i` to cell (prediction, reference).
pub fn weighted_confusion(plots: &[SamplePlot], reference: LabelField, prediction: LabelField) -> Result<ConfusionMatrix> {
    let labels = labels_present(plots, reference, prediction);
    weighted_confusion_with_labels(plots, reference, prediction, labels)
}

pub fn weighted_confusion_with_labels(
    plots: &[SamplePlot],
    reference: LabelField,
    prediction: LabelField,
    labels: Vec<Domain>,
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::zeros(labels);
    for p in plots {
        let r = reference
            .get(p)
            .ok_or_else(|| Error::input(format!("plot {}: missing {} label", p.id, reference.name())))?;
        let q = prediction
            .get(p)
            .ok_or_else(|| Error::input(format!("plot {}: missing {} label", p.id, prediction.name())))?;
        m.add(q, r, p.sampling_weight())
            .map_err(|e| Error::input(format!("plot {}: {e}", p.id)))?;
    }
    Ok(m)
}

/// One validation stand with the counts of map pixels per class inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandRecord {
    pub stand_id: String,
    pub reference: Domain,
    pub pixel_counts: BTreeMap<Domain, u64>,
    pub area_m2: f64,
}

impl StandRecord {
    /// Plurality class; ties go to the earlier class in [`Domain`] order.
    pub fn plurality(&self) -> Option<Domain> {
        let mut best: Option<(Domain, u64)> = None;
        // BTreeMap iterates in class order, so `>` keeps the earliest on ties.
        for (&d, &c) in &self.pixel_counts {
            if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
                best = Some((d, c));
            }
        }
        best.map(|(d, _)| d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StandWeighting {
    /// Every stand counts once.
    #[default]
    Count,
    /// Stands weighted by their area.
    Area,
}

/// Stand-level confusion matrix from plurality-of-pixels predictions.
pub fn stand_level_confusion(stands: &[StandRecord], weighting: StandWeighting) -> Result<ConfusionMatrix> {
    let mut labels: Vec<Domain> = Vec::new();
    let mut rows = Vec::with_capacity(stands.len());
    for s in stands {
        let predicted = s
            .plurality()
            .ok_or_else(|| Error::input(format!("stand {} has no counted pixels", s.stand_id)))?;
        let w = match weighting {
            StandWeighting::Count => 1.0,
            StandWeighting::Area => s.area_m2,
        };
        labels.extend([predicted, s.reference]);
        rows.push((predicted, s.reference, w));
    }
    labels.sort();
    labels.dedup();
    let mut m = ConfusionMatrix::zeros(labels);
    for (p, r, w) in rows {
        m.add(p, r, w)?;
    }
    Ok(m)
}

/// Builds stand records by overlaying a class map with a stand-id raster.
///
/// `stand_ids` holds one id per map cell (`None` outside any stand);
/// `references` maps stand id to (reference label, area m²).
pub fn aggregate_stands(
    class_codes: &[u8],
    stand_ids: &[Option<u32>],
    references: &BTreeMap<u32, (Domain, f64)>,
) -> Result<Vec<StandRecord>> {
    if class_codes.len() != stand_ids.len() {
        return Err(Error::input("class map and stand raster differ in size"));
    }
    let mut counts: BTreeMap<u32, BTreeMap<Domain, u64>> = BTreeMap::new();
    for (&code, id) in class_codes.iter().zip(stand_ids) {
        let (Some(id), Some(d)) = (id, Domain::from_code(code)) else {
            continue;
        };
        if references.contains_key(id) {
            *counts.entry(*id).or_default().entry(d).or_default() += 1;
        }
    }
    Ok(references
        .iter()
        .map(|(&id, &(reference, area_m2))| StandRecord {
            stand_id: id.to_string(),
            reference,
            pixel_counts: counts.remove(&id).unwrap_or_default(),
            area_m2,
        })
        .collect())
}
