use super::dataset::Dataset;
use super::forest::{default_mtry, Forest, TrainParams};
use crate::accuracy::ConfusionMatrix;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Stream index reserved for the fold permutation.
const FOLD_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct CvParams {
    pub k: usize,
    pub train: TrainParams,
}

impl Default for CvParams {
    fn default() -> Self {
        Self {
            k: 10,
            train: TrainParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Fold of each sample.
    pub folds: Vec<usize>,
    /// Class index predicted for each sample by the forest that did not see it.
    pub predictions: Vec<usize>,
    /// Sampling-weighted confusion of the held-out predictions.
    pub confusion: ConfusionMatrix,
    pub oa: f64,
}

impl CvResult {
    pub fn predicted_labels(&self, data: &Dataset) -> Vec<Domain> {
        self.predictions.iter().map(|&c| data.class_labels()[c]).collect()
    }
}

/// Seeded fold assignment: a shuffled permutation dealt round-robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::for_stream(seed, FOLD_STREAM).shuffle(&mut order);
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    folds
}

/// k-fold cross-validation. Fold `f` trains with seed stream `f` of `seed`.
///
/// A training fold missing some class only logs a warning; a training fold
/// with a single class predicts that class.
pub fn kfold_cv(data: &Dataset, params: &CvParams, seed: u64) -> Result<CvResult> {
    let n = data.n_samples();
    let k = params.k;
    if k < 2 || n < k {
        return Err(Error::input(format!("k-fold cross-validation needs 2 <= k <= n, got k={k}, n={n}")));
    }
    let folds = fold_assignment(n, k, seed);
    let mut predictions = vec![0usize; n];
    for f in 0..k {
        let train_rows: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let test_rows: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let train = data.subset_rows(&train_rows);
        let present = train.classes_present();
        if present < data.n_classes() {
            log::warn!("fold {f}: {} of {} classes absent from training data", data.n_classes() - present, data.n_classes());
        }
        if present < 2 {
            let only = train.labels()[0];
            for &i in &test_rows {
                predictions[i] = only;
            }
            continue;
        }
        let tp = TrainParams {
            seed: SplitMix64::for_stream(seed, f as u64).next_u64(),
            ..params.train.clone()
        };
        let forest = Forest::train(&train, &tp, None)?;
        let test = data.subset_rows(&test_rows);
        for (&i, c) in test_rows.iter().zip(forest.predict_dataset(&test)?) {
            predictions[i] = c;
        }
    }
    let confusion = confusion_of(data, &predictions)?;
    let oa = confusion.oa().unwrap_or(0.0);
    Ok(CvResult {
        folds,
        predictions,
        confusion,
        oa,
    })
}

/// Sampling-weighted confusion of class-index predictions against `data`.
pub(crate) fn confusion_of(data: &Dataset, predictions: &[usize]) -> Result<ConfusionMatrix> {
    let labels = data.class_labels();
    let mut m = ConfusionMatrix::zeros(labels.to_vec());
    for i in 0..data.n_samples() {
        m.add(labels[predictions[i]], labels[data.label(i)], data.weights()[i])?;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneRow {
    pub ntrees: usize,
    pub mtry: usize,
    pub oa: f64,
    /// Grid point equal to the default parameters.
    pub is_default: bool,
}

/// Cross-validated OA over a parameter grid. Every grid point uses the same
/// folds and fold seeds; nothing is selected automatically.
pub fn tune(data: &Dataset, ntrees_grid: &[usize], mtry_grid: &[usize], base: &CvParams, seed: u64) -> Result<Vec<TuneRow>> {
    if ntrees_grid.is_empty() || mtry_grid.is_empty() {
        return Err(Error::input("tuning grids must be non-empty"));
    }
    let default = TrainParams::default();
    let default_m = default_mtry(data.n_features());
    let mut rows = Vec::with_capacity(ntrees_grid.len() * mtry_grid.len());
    for &ntrees in ntrees_grid {
        for &mtry in mtry_grid {
            let params = CvParams {
                k: base.k,
                train: TrainParams {
                    ntrees,
                    mtry: Some(mtry),
                    ..base.train.clone()
                },
            };
            let r = kfold_cv(data, &params, seed)?;
            rows.push(TuneRow {
                ntrees,
                mtry,
                oa: r.oa,
                is_default: ntrees == default.ntrees && mtry == default_m,
            });
        }
    }
    Ok(rows)
}

/// Tuning table as CSV (`ntrees,mtry,oa,default`).
pub fn tune_csv(rows: &[TuneRow]) -> String {
    let mut out = String::from("ntrees,mtry,oa,default\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.ntrees, r.mtry, r.oa, if r.is_default { "*" } else { "" }));
    }
    out
}
