//! CART classification tree with Gini impurity.
//!
//! Split candidates lie between consecutive distinct sorted values of a
//! feature and the stored threshold is their midpoint; a sample goes left
//! when `value <= threshold`. Which split is chosen depends only on the rank
//! order of each feature, so a strictly increasing transform of a feature
//! leaves the tree structure and the routing of every value seen in
//! training unchanged.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::rng::SplitMix64;

const LEAF: u32 = u32::MAX;

/// Relative tolerance below which two split scores count as equal; the
/// earlier candidate (lower feature index, then lower threshold) wins.
const SCORE_TIE_TOL: f64 = 1e-12;

/// Flat node: internal nodes store the feature and the index of the left
/// child (the right child follows it); leaves store `LEAF` and the class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(i64, u32, f64)", into = "(i64, u32, f64)")]
pub(crate) struct RawNode {
    feature: u32,
    left: u32,
    threshold: f64,
}

impl From<(i64, u32, f64)> for RawNode {
    fn from((feature, left, threshold): (i64, u32, f64)) -> Self {
        RawNode {
            feature: if feature < 0 { LEAF } else { feature as u32 },
            left,
            threshold,
        }
    }
}

impl From<RawNode> for (i64, u32, f64) {
    fn from(n: RawNode) -> Self {
        let f = if n.feature == LEAF { -1 } else { n.feature as i64 };
        (f, n.left, n.threshold)
    }
}

/// Read-only view of a tree node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeView {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<RawNode>,
    /// Total weighted Gini decrease per feature.
    importance: Vec<f64>,
}

pub(crate) struct GrowParams {
    pub mtry: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

#[derive(Clone, Copy)]
struct Entry {
    value: f64,
    class: u32,
    weight: f64,
}

impl Tree {
    /// Grows a tree on `samples` (row indices, repeats allowed) where
    /// `weights[j]` is the training weight of `samples[j]`.
    pub(crate) fn grow(data: &Dataset, samples: &[usize], weights: &[f64], params: &GrowParams, rng: &mut SplitMix64) -> Tree {
        let k = data.n_classes();
        let p = data.n_features();
        let mut tree = Tree {
            nodes: vec![RawNode {
                feature: LEAF,
                left: 0,
                threshold: 0.0,
            }],
            importance: vec![0.0; p],
        };
        let mut idx: Vec<(usize, f64)> = samples.iter().copied().zip(weights.iter().copied()).collect();
        let mut buf: Vec<Entry> = Vec::with_capacity(idx.len());
        let mut counts = vec![0.0; k];
        let mut left_counts = vec![0.0; k];
        // (node index, start, end, depth)
        let mut stack = vec![(0usize, 0usize, idx.len(), 0usize)];
        while let Some((node, start, end, depth)) = stack.pop() {
            let members = &idx[start..end];
            counts.iter_mut().for_each(|c| *c = 0.0);
            for &(s, w) in members {
                counts[data.label(s)] += w;
            }
            let total: f64 = counts.iter().sum();
            let majority = argmax_first(&counts);
            let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
            let too_small = members.len() < params.min_samples_split;
            let too_deep = params.max_depth.is_some_and(|d| depth >= d);
            if pure || too_small || too_deep {
                tree.nodes[node] = leaf(majority);
                continue;
            }

            let parent_score = sum_sq(&counts) / total;
            let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, score)
            let mut best_score = parent_score;
            let mut features = rng.sample_indices(p, params.mtry);
            features.sort_unstable();
            for &f in &features {
                buf.clear();
                buf.extend(members.iter().map(|&(s, w)| Entry {
                    value: data.value(s, f),
                    class: data.label(s) as u32,
                    weight: w,
                }));
                buf.sort_unstable_by(|a, b| a.value.total_cmp(&b.value));
                left_counts.iter_mut().for_each(|c| *c = 0.0);
                let mut w_left = 0.0;
                for i in 0..buf.len() - 1 {
                    let e = buf[i];
                    left_counts[e.class as usize] += e.weight;
                    w_left += e.weight;
                    if buf[i + 1].value <= e.value {
                        continue;
                    }
                    let w_right = total - w_left;
                    let mut sq_left = 0.0;
                    let mut sq_right = 0.0;
                    for c in 0..k {
                        sq_left += left_counts[c] * left_counts[c];
                        let r = counts[c] - left_counts[c];
                        sq_right += r * r;
                    }
                    let score = sq_left / w_left + sq_right / w_right;
                    if score > best_score + SCORE_TIE_TOL * best_score.abs() {
                        best_score = score;
                        best = Some((f, midpoint(e.value, buf[i + 1].value), score));
                    }
                }
            }

            let Some((feature, threshold, score)) = best else {
                tree.nodes[node] = leaf(majority);
                continue;
            };
            tree.importance[feature] += score - parent_score;

            // Partition members: value <= threshold first.
            let slice = &mut idx[start..end];
            let mut mid = 0;
            for j in 0..slice.len() {
                if data.value(slice[j].0, feature) <= threshold {
                    slice.swap(mid, j);
                    mid += 1;
                }
            }
            let left = tree.nodes.len();
            tree.nodes.push(leaf(0));
            tree.nodes.push(leaf(0));
            tree.nodes[node] = RawNode {
                feature: feature as u32,
                left: left as u32,
                threshold,
            };
            stack.push((left + 1, start + mid, end, depth + 1));
            stack.push((left, start, start + mid, depth + 1));
        }
        tree
    }

    /// Leaf class reached by `x`.
    #[inline]
    pub fn predict_class(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            let n = self.nodes[i];
            if n.feature == LEAF {
                return n.left as usize;
            }
            i = n.left as usize + (x[n.feature as usize] > n.threshold) as usize;
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> NodeView {
        let n = self.nodes[i];
        if n.feature == LEAF {
            NodeView::Leaf { class: n.left as usize }
        } else {
            NodeView::Internal {
                feature: n.feature as usize,
                threshold: n.threshold,
                left: n.left as usize,
                right: n.left as usize + 1,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.node(i) {
                NodeView::Leaf { .. } => 0,
                NodeView::Internal { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    /// A single-leaf tree.
    pub fn constant(class: usize, n_features: usize) -> Tree {
        Tree {
            nodes: vec![leaf(class)],
            importance: vec![0.0; n_features],
        }
    }

    pub(crate) fn validate(&self, n_features: usize, n_classes: usize) -> Result<(), String> {
        if self.importance.len() != n_features {
            return Err("importance length differs from feature count".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.feature == LEAF {
                if n.left as usize >= n_classes {
                    return Err(format!("node {i}: class {} out of range", n.left));
                }
            } else if n.feature as usize >= n_features || n.left as usize + 1 >= self.nodes.len() || n.left as usize <= i {
                return Err(format!("node {i}: invalid feature or child index"));
            }
        }
        Ok(())
    }
}

#[inline]
fn leaf(class: usize) -> RawNode {
    RawNode {
        feature: LEAF,
        left: class as u32,
        threshold: 0.0,
    }
}

/// Midpoint of `a < b`, kept strictly below `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

/// Index of the largest value; the first one on ties.
pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
