use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::estimation::SamplePlot;

/// Labelled feature matrix (row-major) with per-sample sampling weights.
///
/// The weights only enter accuracy metrics; training treats samples
/// equally unless explicit training weights are passed to
/// [`Forest::train`](super::Forest::train).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    class_labels: Vec<Domain>,
    feature_names: Vec<String>,
    weights: Vec<f64>,
}

impl Dataset {
    /// Class labels are the distinct values of `labels` in class order.
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: &[Domain]) -> Result<Self> {
        let mut class_labels = labels.to_vec();
        class_labels.sort();
        class_labels.dedup();
        Self::with_classes(feature_names, rows, labels, class_labels)
    }

    pub fn with_classes(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: &[Domain], class_labels: Vec<Domain>) -> Result<Self> {
        let p = feature_names.len();
        if rows.len() != labels.len() {
            return Err(Error::input(format!("{} feature rows but {} labels", rows.len(), labels.len())));
        }
        let mut features = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::input(format!("row {i}: {} features, expected {p}", row.len())));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::input(format!("row {i}: missing or non-finite value for feature {}", feature_names[j])));
            }
            features.extend_from_slice(row);
        }
        let labels = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                class_labels
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| Error::input(format!("row {i}: label {l} not among classes")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = labels.len();
        Ok(Self {
            n_features: p,
            features,
            labels,
            class_labels,
            feature_names,
            weights: vec![1.0; n],
        })
    }

    /// Sampling weights used for weighted accuracy.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_samples() {
            return Err(Error::input("weights length differs from sample count"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::input("sampling weights must be positive"));
        }
        self.weights = weights;
        Ok(self)
    }

    /// Model data from plots: the observed label, the plot predictors and
    /// the plot sampling weight.
    pub fn from_plots(plots: &[SamplePlot], feature_names: Vec<String>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = plots.iter().map(|p| p.predictors.clone()).collect();
        for (p, row) in plots.iter().zip(&rows) {
            if row.len() != feature_names.len() {
                return Err(Error::input(format!(
                    "plot {}: {} predictors, expected {}",
                    p.id,
                    row.len(),
                    feature_names.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("plot {}: missing predictor value", p.id)));
            }
        }
        let labels: Vec<Domain> = plots.iter().map(|p| p.observed).collect();
        Self::new(feature_names, rows, &labels)?.with_weights(plots.iter().map(|p| p.sampling_weight()).collect())
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.features[i * self.n_features + feature]
    }

    /// Class index of sample `i`.
    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_labels(&self) -> &[Domain] {
        &self.class_labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of distinct classes actually present among the samples.
    pub fn classes_present(&self) -> usize {
        let mut seen = vec![false; self.n_classes()];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }

    /// Copy with only the given feature columns, in the given order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Dataset> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.n_features) {
            return Err(Error::input(format!("feature index {c} out of range")));
        }
        let mut features = Vec::with_capacity(self.n_samples() * columns.len());
        for i in 0..self.n_samples() {
            let row = self.row(i);
            features.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(Dataset {
            n_features: columns.len(),
            features,
            labels: self.labels.clone(),
            class_labels: self.class_labels.clone(),
            feature_names: columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
            weights: self.weights.clone(),
        })
    }

    /// Copy with only the given rows (class list unchanged).
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.n_features);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Dataset {
            n_features: self.n_features,
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            class_labels: self.class_labels.clone(),
            feature_names: self.feature_names.clone(),
            weights: rows.iter().map(|&r| self.weights[r]).collect(),
        }
    }

    /// Applies `f` to every value of one feature column.
    pub fn map_feature(&self, feature: usize, f: impl Fn(f64) -> f64) -> Dataset {
        let mut out = self.clone();
        for i in 0..out.n_samples() {
            out.features[i * out.n_features + feature] = f(self.value(i, feature));
        }
        out
    }
}
