//! Prediction-only forest layout.
//!
//! All trees share one node array. A leaf points to itself with an infinite
//! threshold, so stepping from a leaf is a no-op and several samples can be
//! walked down a tree in lockstep without per-sample branches.

use super::forest::Forest;
use super::tree::NodeView;

/// Samples walked through a tree together.
const LANES: usize = 8;

#[derive(Clone)]
pub struct CompiledForest {
    feature: Vec<u32>,
    /// Left child (right child is `next + 1`), or the node itself for a leaf.
    next: Vec<u32>,
    threshold: Vec<f64>,
    /// Class of each leaf node (unused for internal nodes).
    leaf_class: Vec<u32>,
    roots: Vec<u32>,
    n_features: usize,
    n_classes: usize,
}

impl CompiledForest {
    pub fn new(forest: &Forest) -> Self {
        let mut feature = Vec::new();
        let mut next = Vec::new();
        let mut threshold = Vec::new();
        let mut leaf_class = Vec::new();
        let mut roots = Vec::with_capacity(forest.trees().len());
        for t in forest.trees() {
            let base = feature.len() as u32;
            roots.push(base);
            for i in 0..t.n_nodes() {
                match t.node(i) {
                    NodeView::Internal {
                        feature: f,
                        threshold: t,
                        left,
                        ..
                    } => {
                        feature.push(f as u32);
                        next.push(base + left as u32);
                        threshold.push(t);
                        leaf_class.push(0);
                    }
                    NodeView::Leaf { class } => {
                        feature.push(0);
                        next.push(base + i as u32);
                        threshold.push(f64::INFINITY);
                        leaf_class.push(class as u32);
                    }
                }
            }
        }
        Self {
            feature,
            next,
            threshold,
            leaf_class,
            roots,
            n_features: forest.n_features(),
            n_classes: forest.class_labels.len(),
        }
    }

    /// Plurality-vote class index for each row of `rows` (cell-major,
    /// `out.len() × p`, all values finite); ties go to the lower class.
    ///
    /// Trees are applied in rounds; after each round rows whose winner can
    /// no longer change are retired, which leaves every result unchanged.
    pub fn predict_block(&self, rows: &[f64], out: &mut [u32]) {
        let p = self.n_features;
        let k = self.n_classes;
        let n = out.len();
        assert_eq!(rows.len(), n * p, "feature block size");
        let mut votes = vec![0u32; (n + 1) * k];
        let mut padded = Vec::with_capacity((n + 1) * p);
        padded.extend_from_slice(rows);
        padded.resize((n + 1) * p, 0.0);
        let mut active: Vec<u32> = (0..n as u32).collect();
        let total = self.roots.len() as u32;
        let mut applied = 0u32;
        for round in self.roots.chunks(TREES_PER_ROUND) {
            for &root in round {
                self.walk_tree(root, &padded, &active, n, &mut votes);
            }
            applied += round.len() as u32;
            let remaining = total - applied;
            if remaining > 0 {
                active.retain(|&r| !decided(&votes[r as usize * k..(r as usize + 1) * k], remaining));
                if active.is_empty() {
                    break;
                }
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = leader(&votes[i * k..(i + 1) * k]) as u32;
        }
    }
}

/// Trees applied between checks for decided rows.
const TREES_PER_ROUND: usize = 25;

/// Class with the most votes; the lowest index on ties.
fn leader(v: &[u32]) -> usize {
    let mut best = 0;
    for c in 1..v.len() {
        if v[c] > v[best] {
            best = c;
        }
    }
    best
}

/// Whether the leader keeps winning however `remaining` further votes fall.
fn decided(v: &[u32], remaining: u32) -> bool {
    let b = leader(v);
    v.iter().enumerate().all(|(c, &x)| c == b || x + remaining < v[b] || (x + remaining == v[b] && c > b))
}

impl CompiledForest {
    /// Adds one vote per active row for the leaf it reaches in the tree at
    /// `root`. Rows are walked in groups of `LANES` in lockstep until every
    /// lane sits on a leaf.
    fn walk_tree(&self, root: u32, rows: &[f64], active: &[u32], n: usize, votes: &mut [u32]) {
        let p = self.n_features;
        let k = self.n_classes;
        let feature = &self.feature[..];
        let next = &self.next[..];
        let threshold = &self.threshold[..];
        let leaf_class = &self.leaf_class[..];
        debug_assert!(rows.len() >= (n + 1) * p && votes.len() >= (n + 1) * k);
        for group in active.chunks(LANES) {
            let mut base = [n * p; LANES];
            for (b, &r) in base.iter_mut().zip(group) {
                *b = r as usize * p;
            }
            let mut idx = [root; LANES];
            loop {
                let mut moved = 0u32;
                for l in 0..LANES {
                    let j = idx[l] as usize;
                    // In range: children lie inside the node arrays and
                    // `base` addresses one of the `n + 1` padded rows.
                    let nx = unsafe {
                        let f = *feature.get_unchecked(j) as usize;
                        let v = *rows.get_unchecked(base[l] + f);
                        *next.get_unchecked(j) + (v > *threshold.get_unchecked(j)) as u32
                    };
                    moved |= nx ^ idx[l];
                    idx[l] = nx;
                }
                if moved == 0 {
                    break;
                }
            }
            for (l, &r) in group.iter().enumerate() {
                votes[r as usize * k + leaf_class[idx[l] as usize] as usize] += 1;
            }
        }
    }
}
