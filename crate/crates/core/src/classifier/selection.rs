//! Forward/backward variable selection driven by cross-validated OA.
//!
//! Forward: candidates are tried in the given order and a candidate is
//! added when it strictly raises OA. Backward: the survivors are visited
//! once in ascending Gini importance (computed on the forward result) and a
//! feature is removed when OA does not drop without it. The last remaining
//! feature is never removed.

use std::fmt;

use super::cv::{kfold_cv, CvParams};
use super::dataset::Dataset;
use super::forest::Forest;
use crate::error::{Error, Result};

/// First line of the trace CSV.
pub const TRACE_HEADER: &str = "# oa=k-fold cross-validated sampling-weighted overall accuracy";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionAction {
    Add,
    /// Forward candidate that did not improve OA.
    Skip,
    Remove,
    Keep,
}

impl fmt::Display for SelectionAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionAction::Add => "add",
            SelectionAction::Skip => "skip",
            SelectionAction::Remove => "remove",
            SelectionAction::Keep => "keep",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStep {
    pub action: SelectionAction,
    /// Column index in the input data.
    pub feature: usize,
    pub oa_before: f64,
    pub oa_after: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
}

impl SelectionTrace {
    /// Feature set obtained by applying every add and remove in order.
    pub fn replay(&self) -> Vec<usize> {
        let mut set: Vec<usize> = Vec::new();
        for s in &self.steps {
            match s.action {
                SelectionAction::Add => set.push(s.feature),
                SelectionAction::Remove => set.retain(|&f| f != s.feature),
                SelectionAction::Skip | SelectionAction::Keep => {}
            }
        }
        set
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = format!("{TRACE_HEADER}\nstep,action,feature,oa_before,oa_after\n");
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                s.action,
                names.get(s.feature).map(String::as_str).unwrap_or("?"),
                s.oa_before,
                s.oa_after
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected columns in the order they were added.
    pub features: Vec<usize>,
    pub oa: f64,
    pub trace: SelectionTrace,
}

/// Weighted OA of always predicting the heaviest class.
fn majority_oa(data: &Dataset) -> f64 {
    let mut w = vec![0.0; data.n_classes()];
    for i in 0..data.n_samples() {
        w[data.label(i)] += data.weights()[i];
    }
    let total: f64 = w.iter().sum();
    w.iter().copied().fold(0.0, f64::max) / total
}

pub fn select_variables(data: &Dataset, candidates: &[usize], params: &CvParams, seed: u64) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::input("variable selection needs at least one candidate"));
    }
    if let Some(&c) = candidates.iter().find(|&&c| c >= data.n_features()) {
        return Err(Error::input(format!("candidate feature {c} out of range")));
    }
    let eval = |set: &[usize]| -> Result<f64> { Ok(kfold_cv(&data.select_features(set)?, params, seed)?.oa) };

    let mut steps = Vec::new();
    let mut set: Vec<usize> = Vec::new();
    let mut current = majority_oa(data);
    let mut best_single: Option<(usize, f64)> = None;
    for &f in candidates {
        let mut trial = set.clone();
        trial.push(f);
        let oa = eval(&trial)?;
        if set.is_empty() && best_single.is_none_or(|(_, b)| oa > b) {
            best_single = Some((steps.len(), oa));
        }
        if oa > current {
            steps.push(SelectionStep {
                action: SelectionAction::Add,
                feature: f,
                oa_before: current,
                oa_after: oa,
            });
            set = trial;
            current = oa;
        } else {
            steps.push(SelectionStep {
                action: SelectionAction::Skip,
                feature: f,
                oa_before: current,
                oa_after: oa,
            });
        }
    }
    if set.is_empty() {
        // No candidate beats the majority baseline: keep the best one anyway.
        let (step, oa) = best_single.expect("at least one candidate evaluated");
        steps[step].action = SelectionAction::Add;
        let f = steps[step].feature;
        log::warn!("no candidate improves on the majority-class baseline; keeping feature {}", data.feature_names()[f]);
        set.push(f);
        current = oa;
    }

    if set.len() > 1 {
        let forest = Forest::train(&data.select_features(&set)?, &params.train, None)?;
        let imp = forest.gini_importance();
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.sort_by(|&a, &b| imp[a].total_cmp(&imp[b]).then(a.cmp(&b)));
        let visit: Vec<usize> = order.iter().map(|&i| set[i]).collect();
        for f in visit {
            if set.len() == 1 {
                break;
            }
            let trial: Vec<usize> = set.iter().copied().filter(|&x| x != f).collect();
            let oa = eval(&trial)?;
            if oa >= current {
                steps.push(SelectionStep {
                    action: SelectionAction::Remove,
                    feature: f,
                    oa_before: current,
                    oa_after: oa,
                });
                set = trial;
                current = oa;
            } else {
                steps.push(SelectionStep {
                    action: SelectionAction::Keep,
                    feature: f,
                    oa_before: current,
                    oa_after: oa,
                });
            }
        }
    }

    Ok(Selection {
        features: set,
        oa: current,
        trace: SelectionTrace { steps },
    })
}
