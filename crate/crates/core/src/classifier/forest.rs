use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compiled::CompiledForest;
use super::dataset::Dataset;
use super::tree::{argmax_first, GrowParams, Tree};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Magic string identifying the serialized forest format.
pub const FOREST_FORMAT: &str = "FORESTAREA-RF-1";

/// `max(1, ⌊p/3⌋)`.
pub fn default_mtry(p: usize) -> usize {
    (p / 3).max(1)
}

/// Distinct `max(1, ⌊p/d⌋)` for `d` in `divisors`, in divisor order.
pub fn mtry_divisor_grid(p: usize, divisors: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for d in divisors {
        let m = (p / d.max(1)).max(1);
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub ntrees: usize,
    /// Features tried per node; `None` means [`default_mtry`].
    pub mtry: Option<usize>,
    pub seed: u64,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// Train trees on the rayon pool. Output is identical either way.
    pub parallel: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            ntrees: 500,
            mtry: None,
            seed: 1,
            min_samples_split: 2,
            max_depth: None,
            parallel: true,
        }
    }
}

impl TrainParams {
    pub fn with_ntrees(mut self, ntrees: usize) -> Self {
        self.ntrees = ntrees;
        self
    }

    pub fn with_mtry(mut self, mtry: usize) -> Self {
        self.mtry = Some(mtry);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    format: String,
    pub ntrees: usize,
    pub mtry: usize,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub class_labels: Vec<Domain>,
    trees: Vec<Tree>,
}

impl Forest {
    /// Trains a forest. Tree `t` draws its bootstrap sample and feature
    /// subsets from stream `t` of `params.seed`, so serial and parallel
    /// training produce the same forest.
    pub fn train(data: &Dataset, params: &TrainParams, sample_weights: Option<&[f64]>) -> Result<Forest> {
        let n = data.n_samples();
        let p = data.n_features();
        if params.ntrees == 0 {
            return Err(Error::input("ntrees must be at least 1"));
        }
        if n == 0 || p == 0 {
            return Err(Error::input("training data has no samples or no features"));
        }
        let mtry = params.mtry.unwrap_or_else(|| default_mtry(p));
        if mtry == 0 || mtry > p {
            return Err(Error::input(format!("mtry must be in 1..={p}, got {mtry}")));
        }
        if data.classes_present() < 2 {
            return Err(Error::Degenerate("training data contains a single class".into()));
        }
        if let Some(w) = sample_weights {
            if w.len() != n || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::input("training weights must be non-negative, one per sample"));
            }
        }
        let grow = GrowParams {
            mtry,
            min_samples_split: params.min_samples_split.max(2),
            max_depth: params.max_depth,
        };
        let build = |t: usize| -> Tree {
            let mut rng = SplitMix64::for_stream(params.seed, t as u64);
            let samples: Vec<usize> = (0..n).map(|_| rng.below_usize(n)).collect();
            let weights: Vec<f64> = match sample_weights {
                Some(w) => samples.iter().map(|&s| w[s]).collect(),
                None => vec![1.0; n],
            };
            Tree::grow(data, &samples, &weights, &grow, &mut rng)
        };
        let trees: Vec<Tree> = if params.parallel {
            (0..params.ntrees).into_par_iter().map(build).collect()
        } else {
            (0..params.ntrees).map(build).collect()
        };
        Ok(Forest {
            format: FOREST_FORMAT.to_string(),
            ntrees: params.ntrees,
            mtry,
            seed: params.seed,
            feature_names: data.feature_names().to_vec(),
            class_labels: data.class_labels().to_vec(),
            trees,
        })
    }

    /// Forest made of given trees (used for injected / hand-built models).
    pub fn from_trees(trees: Vec<Tree>, feature_names: Vec<String>, class_labels: Vec<Domain>) -> Result<Forest> {
        let f = Forest {
            format: FOREST_FORMAT.to_string(),
            ntrees: trees.len(),
            mtry: default_mtry(feature_names.len()),
            seed: 0,
            feature_names,
            class_labels,
            trees,
        };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        if self.format != FOREST_FORMAT {
            return Err(Error::input(format!("not a forest file (format '{}')", self.format)));
        }
        if self.trees.is_empty() || self.trees.len() != self.ntrees {
            return Err(Error::input("forest tree count does not match ntrees"));
        }
        let p = self.feature_names.len();
        let k = self.class_labels.len();
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(p, k).map_err(|e| Error::input(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::input(format!(
                "feature vector has length {}, forest expects {}",
                x.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Plurality vote; ties go to the earlier class label.
    pub fn predict(&self, x: &[f64]) -> Result<Domain> {
        self.check_len(x)?;
        Ok(self.class_labels[self.predict_index_unchecked(x)])
    }

    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        self.check_len(x)?;
        Ok(self.predict_index_unchecked(x))
    }

    fn predict_index_unchecked(&self, x: &[f64]) -> usize {
        let mut votes = vec![0.0; self.class_labels.len()];
        for t in &self.trees {
            votes[t.predict_class(x)] += 1.0;
        }
        argmax_first(&votes)
    }

    /// Predicted class index for every sample of `data`.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<usize>> {
        if data.n_features() != self.n_features() {
            return Err(Error::input("dataset feature count differs from forest"));
        }
        let mut out = vec![0u32; data.n_samples()];
        let rows: Vec<f64> = (0..data.n_samples()).flat_map(|i| data.row(i).iter().copied()).collect();
        CompiledForest::new(self).predict_block(&rows, &mut out);
        Ok(out.into_iter().map(|c| c as usize).collect())
    }

    /// Mean decrease in Gini impurity per feature, averaged over trees.
    pub fn gini_importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features()];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.importance()) {
                *a += v;
            }
        }
        acc.iter().map(|v| v / self.trees.len() as f64).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let f: Forest = serde_json::from_str(text).map_err(|e| Error::input(format!("invalid forest file: {e}")))?;
        f.validate()?;
        Ok(f)
    }
}
