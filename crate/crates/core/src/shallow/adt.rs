//! Boosted alternating decision trees.
//!
//! A model is a root prediction value plus a list of splitter nodes. Each
//! splitter hangs below a prediction node (the root, or one branch of an
//! earlier splitter) and tests `x[feature] < threshold`. An instance's score
//! is the root value plus the value of every splitter branch it reaches.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdtHyper {
    pub rounds: usize,
}

impl Default for AdtHyper {
    fn default() -> Self {
        AdtHyper { rounds: 10 }
    }
}

/// Prediction node a splitter hangs from: `None` is the root, otherwise
/// (splitter index, branch).
pub type Parent = Option<(usize, bool)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdtSplitter {
    pub parent: Parent,
    pub feature: usize,
    pub threshold: f64,
    pub value_true: f64,
    pub value_false: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdtModel {
    pub root_value: f64,
    pub splitters: Vec<AdtSplitter>,
    pub rounds: usize,
    pub n_features: usize,
}

impl AdtModel {
    /// Conjunction of (splitter, branch) conditions that must hold for
    /// splitter `s` to be reached, outermost first.
    pub fn precondition_path(&self, s: usize) -> Vec<(usize, bool)> {
        let mut path = Vec::new();
        let mut cur = self.splitters[s].parent;
        while let Some((p, branch)) = cur {
            path.push((p, branch));
            cur = self.splitters[p].parent;
        }
        path.reverse();
        path
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(FcpError::Shape(format!(
                "ADT expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        // splitters only ever point at earlier splitters, so one forward pass suffices
        let mut outcome: Vec<Option<bool>> = Vec::with_capacity(self.splitters.len());
        let mut score = self.root_value;
        for s in &self.splitters {
            let reached = match s.parent {
                None => true,
                Some((p, branch)) => outcome[p] == Some(branch),
            };
            if reached {
                let c = x[s.feature] < s.threshold;
                score += if c { s.value_true } else { s.value_false };
                outcome.push(Some(c));
            } else {
                outcome.push(None);
            }
        }
        Ok(score)
    }

    /// (label in {-1, +1}, score); zero maps to +1.
    pub fn predict(&self, x: &[f64]) -> Result<(i8, f64)> {
        let s = self.score(x)?;
        Ok((if s >= 0.0 { 1 } else { -1 }, s))
    }

    /// Logistic link of the boosting score: P(y = +1 | x).
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        let s = self.score(x)?;
        Ok(1.0 / (1.0 + (-2.0 * s).exp()))
    }
}

struct Candidate {
    node: usize,
    feature: usize,
    threshold: f64,
    z: f64,
}

pub fn train_adt(x: &Array2<f64>, y: &[i8], hyper: &AdtHyper) -> Result<AdtModel> {
    train_adt_traced(x, y, hyper).map(|(m, _)| m)
}

/// Trains and also returns the exponential loss Σ exp(−y·score) after the
/// root and after every round.
pub fn train_adt_traced(x: &Array2<f64>, y: &[i8], hyper: &AdtHyper) -> Result<(AdtModel, Vec<f64>)> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(FcpError::Shape(format!("{n} rows, {} labels", y.len())));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(FcpError::Label(format!("ADT labels must be ±1, found {bad}")));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(FcpError::DegenerateLabels("ADT needs both classes".into()));
    }
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let eps = 1.0 / (2.0 * n as f64);
    let mut w = vec![1.0 / n as f64; n];
    let smoothed = |wp: f64, wn: f64| 0.5 * ((wp + eps) / (wn + eps)).ln();

    let (wp, wn) = split_weight(&w, &yf, (0..n).map(|_| true));
    let root_value = smoothed(wp, wn);
    for i in 0..n {
        w[i] *= (-yf[i] * root_value).exp();
    }
    let mut losses = vec![w.iter().sum::<f64>() * n as f64];

    // presorted instance order per feature
    let order: Vec<Vec<usize>> = (0..d)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[[a, j]].total_cmp(&x[[b, j]]));
            idx
        })
        .collect();

    // prediction nodes: (parent, membership mask)
    let mut nodes: Vec<(Parent, Vec<bool>)> = vec![(None, vec![true; n])];
    let mut splitters: Vec<AdtSplitter> = Vec::new();

    for _ in 0..hyper.rounds {
        let total: f64 = w.iter().sum();
        let mut best: Option<Candidate> = None;
        for (node_idx, (_, members)) in nodes.iter().enumerate() {
            let (np, nn) = split_weight(&w, &yf, members.iter().copied());
            let outside = total - np - nn;
            for (j, ord) in order.iter().enumerate() {
                let (mut lp, mut ln) = (0.0, 0.0);
                let mut prev: Option<f64> = None;
                for &i in ord {
                    if !members[i] {
                        continue;
                    }
                    let v = x[[i, j]];
                    if let Some(pv) = prev {
                        if v > pv {
                            let (rp, rn) = ((np - lp).max(0.0), (nn - ln).max(0.0));
                            let z = 2.0 * ((lp * ln).sqrt() + (rp * rn).sqrt()) + outside;
                            if best.as_ref().is_none_or(|b| z < b.z) {
                                best = Some(Candidate {
                                    node: node_idx,
                                    feature: j,
                                    threshold: 0.5 * (pv + v),
                                    z,
                                });
                            }
                        }
                    }
                    if yf[i] > 0.0 {
                        lp += w[i];
                    } else {
                        ln += w[i];
                    }
                    prev = Some(v);
                }
            }
        }
        let Some(best) = best else {
            log::info!("ADT stopped early: no admissible split");
            break;
        };
        let members = nodes[best.node].1.clone();
        let cond: Vec<bool> = (0..n)
            .map(|i| x[[i, best.feature]] < best.threshold)
            .collect();
        let true_mask: Vec<bool> = (0..n).map(|i| members[i] && cond[i]).collect();
        let false_mask: Vec<bool> = (0..n).map(|i| members[i] && !cond[i]).collect();
        let (tp, tn) = split_weight(&w, &yf, true_mask.iter().copied());
        let (fp, fneg) = split_weight(&w, &yf, false_mask.iter().copied());
        let value_true = smoothed(tp, tn);
        let value_false = smoothed(fp, fneg);
        for i in 0..n {
            if true_mask[i] {
                w[i] *= (-yf[i] * value_true).exp();
            } else if false_mask[i] {
                w[i] *= (-yf[i] * value_false).exp();
            }
        }
        let s = splitters.len();
        let node_parent = nodes[best.node].0;
        splitters.push(AdtSplitter {
            parent: node_parent,
            feature: best.feature,
            threshold: best.threshold,
            value_true,
            value_false,
        });
        nodes.push((Some((s, true)), true_mask));
        nodes.push((Some((s, false)), false_mask));
        losses.push(w.iter().sum::<f64>() * n as f64);
    }
    let model = AdtModel {
        root_value,
        rounds: splitters.len(),
        splitters,
        n_features: d,
    };
    Ok((model, losses))
}

fn split_weight(w: &[f64], y: &[f64], mask: impl Iterator<Item = bool>) -> (f64, f64) {
    let (mut p, mut n) = (0.0, 0.0);
    for (i, m) in mask.enumerate() {
        if m {
            if y[i] > 0.0 {
                p += w[i];
            } else {
                n += w[i];
            }
        }
    }
    (p, n)
}
