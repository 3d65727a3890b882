//! Random forests of CART trees with Gini splits and out-of-bag error.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfHyper {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌊√D⌋.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfHyper {
    fn default() -> Self {
        RfHyper {
            n_trees: 100,
            mtry: None,
            min_leaf: 1,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfHyper {
    pub fn resolve_mtry(&self, d: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .clamp(1, d.max(1))
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 || self.mtry == Some(0) || self.max_depth == Some(0) {
            return Err(FcpError::Config(
                "forest hyperparameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Index into the forest's class list.
    Leaf { class: usize },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Node 0 is the root. `x[feature] < threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub classes: Vec<i64>,
    pub trees: Vec<Tree>,
    pub per_tree_seed: Vec<u64>,
    pub oob_error: f64,
    pub feature_importances: Vec<f64>,
    pub n_features: usize,
}

impl RfModel {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(FcpError::Shape(format!(
                "forest expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    /// Vote fractions in `classes` order.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut votes = vec![0usize; self.classes.len()];
        for t in &self.trees {
            votes[t.predict_index(x)] += 1;
        }
        let n = self.trees.len() as f64;
        Ok(votes.into_iter().map(|v| v as f64 / n).collect())
    }

    /// Majority label (ties → lowest class id) and vote fractions.
    pub fn predict(&self, x: &[f64]) -> Result<(i64, Vec<f64>)> {
        let p = self.probabilities(x)?;
        Ok((self.classes[argmax_lowest(&p)], p))
    }
}

/// First index of the maximum.
pub(crate) fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / nf).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
    /// n_left·gini_left + n_right·gini_right
    pub weighted_impurity: f64,
}

/// Best Gini split of `rows` on `feature`, honouring `min_leaf`.
pub(crate) fn best_split_on(
    x: &Array2<f64>,
    yi: &[usize],
    k: usize,
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<BestSplit> {
    let mut sorted: Vec<usize> = rows.to_vec();
    sorted.sort_by(|&a, &b| x[[a, feature]].total_cmp(&x[[b, feature]]));
    let n = sorted.len();
    let mut right = vec![0usize; k];
    for &r in &sorted {
        right[yi[r]] += 1;
    }
    let mut left = vec![0usize; k];
    let mut best: Option<BestSplit> = None;
    for pos in 1..n {
        let moved = sorted[pos - 1];
        left[yi[moved]] += 1;
        right[yi[moved]] -= 1;
        let (lo, hi) = (x[[moved, feature]], x[[sorted[pos], feature]]);
        if hi <= lo || pos < min_leaf || n - pos < min_leaf {
            continue;
        }
        let imp = pos as f64 * gini(&left, pos) + (n - pos) as f64 * gini(&right, n - pos);
        if best.is_none_or(|b| imp < b.weighted_impurity) {
            let mut threshold = 0.5 * (lo + hi);
            if threshold <= lo {
                threshold = hi;
            }
            best = Some(BestSplit {
                feature,
                threshold,
                weighted_impurity: imp,
            });
        }
    }
    best
}

struct Grown {
    tree: Tree,
    in_bag: Vec<bool>,
    importance: Vec<f64>,
}

fn grow_tree(
    x: &Array2<f64>,
    yi: &[usize],
    k: usize,
    hyper: &RfHyper,
    mtry: usize,
    seed: u64,
) -> Grown {
    let (n, d) = x.dim();
    let mut r = rng::seeded(seed);
    let sample: Vec<usize> = if hyper.bootstrap {
        (0..n).map(|_| r.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut in_bag = vec![false; n];
    for &i in &sample {
        in_bag[i] = true;
    }
    let mut importance = vec![0.0; d];
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { class: 0 }];
    // (node slot, rows, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, sample, 0)];
    let mut features: Vec<usize> = (0..d).collect();
    while let Some((slot, rows, depth)) = stack.pop() {
        let mut counts = vec![0usize; k];
        for &i in &rows {
            counts[yi[i]] += 1;
        }
        let label = majority(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = hyper.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || rows.len() < 2 * hyper.min_leaf {
            nodes[slot] = TreeNode::Leaf { class: label };
            continue;
        }
        features.shuffle(&mut r);
        let mut best: Option<BestSplit> = None;
        let search = |fs: &[usize], best: &mut Option<BestSplit>| {
            for &f in fs {
                if let Some(s) = best_split_on(x, yi, k, &rows, f, hyper.min_leaf) {
                    if best.is_none_or(|b| s.weighted_impurity < b.weighted_impurity) {
                        *best = Some(s);
                    }
                }
            }
        };
        search(&features[..mtry], &mut best);
        if best.is_none() {
            // none of the sampled features varies here; keep looking
            search(&features[mtry..], &mut best);
        }
        let Some(split) = best else {
            nodes[slot] = TreeNode::Leaf { class: label };
            continue;
        };
        importance[split.feature] +=
            rows.len() as f64 * gini(&counts, rows.len()) - split.weighted_impurity;
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| x[[i, split.feature]] < split.threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode::Leaf { class: label });
        nodes.push(TreeNode::Leaf { class: label });
        nodes[slot] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, r_rows, depth + 1));
        stack.push((left, l_rows, depth + 1));
    }
    Grown {
        tree: Tree { nodes },
        in_bag,
        importance,
    }
}

/// Class list (sorted) and per-row class indices.
pub(crate) fn encode_labels(y: &[i64]) -> (Vec<i64>, Vec<usize>) {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let yi = y
        .iter()
        .map(|v| classes.binary_search(v).expect("label present"))
        .collect();
    (classes, yi)
}

/// Per-tree seed for tree `t` under master seed `seed`.
pub fn tree_seed(seed: u64, t: usize) -> u64 {
    let mut r = rng::stream(seed, t as u64);
    r.random()
}

pub fn train_rf(x: &Array2<f64>, y: &[i64], hyper: &RfHyper) -> Result<RfModel> {
    hyper.validate()?;
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(FcpError::Shape(format!("{n} rows, {} labels", y.len())));
    }
    if n < 2 || d == 0 {
        return Err(FcpError::Shape(format!("forest needs at least 2 rows and 1 feature, got {n}×{d}")));
    }
    let (classes, yi) = encode_labels(y);
    let k = classes.len();
    let mtry = hyper.resolve_mtry(d);
    let seeds: Vec<u64> = (0..hyper.n_trees).map(|t| tree_seed(hyper.seed, t)).collect();
    let grown: Vec<Grown> = seeds
        .par_iter()
        .map(|&s| grow_tree(x, &yi, k, hyper, mtry, s))
        .collect();

    let mut oob_votes = vec![vec![0usize; k]; n];
    for (i, votes) in oob_votes.iter_mut().enumerate() {
        let xi = x.row(i).to_vec();
        for g in grown.iter().filter(|g| !g.in_bag[i]) {
            votes[g.tree.predict_index(&xi)] += 1;
        }
    }
    let (mut wrong, mut counted) = (0usize, 0usize);
    for i in 0..n {
        if oob_votes[i].iter().any(|&v| v > 0) {
            counted += 1;
            if majority(&oob_votes[i]) != yi[i] {
                wrong += 1;
            }
        }
    }
    let oob_error = if counted == 0 {
        log::warn!("no out-of-bag instances; OOB error reported as 0");
        0.0
    } else {
        wrong as f64 / counted as f64
    };

    let mut feature_importances = vec![0.0; d];
    for g in &grown {
        let total: f64 = g.importance.iter().sum();
        if total > 0.0 {
            for (acc, v) in feature_importances.iter_mut().zip(&g.importance) {
                *acc += v / total;
            }
        }
    }
    let total: f64 = feature_importances.iter().sum();
    if total > 0.0 {
        feature_importances.iter_mut().for_each(|v| *v /= total);
    }

    Ok(RfModel {
        classes,
        trees: grown.into_iter().map(|g| g.tree).collect(),
        per_tree_seed: seeds,
        oob_error,
        feature_importances,
        n_features: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_labels_give_leaves() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]];
        let m = train_rf(&x, &[7, 7, 7], &RfHyper { n_trees: 5, ..RfHyper::default() }).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(m.oob_error, 0.0);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap().0, 7);
    }

    #[test]
    fn votes_and_ties() {
        let leaf = |c| Tree { nodes: vec![TreeNode::Leaf { class: c }] };
        let mut m = RfModel {
            classes: vec![1, 2],
            trees: vec![leaf(0), leaf(0), leaf(1)],
            per_tree_seed: vec![0, 1, 2],
            oob_error: 0.0,
            feature_importances: vec![0.0],
            n_features: 1,
        };
        let (label, p) = m.predict(&[0.0]).unwrap();
        assert_eq!(label, 1);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        m.trees.pop();
        m.trees.push(leaf(1));
        m.trees.remove(0);
        assert_eq!(m.predict(&[0.0]).unwrap().0, 1);
    }

    #[test]
    fn shape_checked() {
        let x = array![[0.0], [1.0]];
        let m = train_rf(&x, &[0, 1], &RfHyper { n_trees: 2, ..RfHyper::default() }).unwrap();
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(FcpError::Shape(_))));
    }

    #[test]
    fn tree_seeds_are_distinct() {
        let s: Vec<u64> = (0..50).map(|t| tree_seed(42, t)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), s.len());
    }
}
