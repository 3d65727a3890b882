//! One-vs-rest reduction over the binary learners.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adt::{train_adt, AdtHyper, AdtModel};
use super::forest::{argmax_lowest, train_rf, RfHyper, RfModel};
use super::svm::{train_svm, SvmHyper, SvmModel};
use crate::error::{FcpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "algo", content = "hyper")]
pub enum ShallowAlgo {
    Svm(SvmHyper),
    Adt(AdtHyper),
    Rf(RfHyper),
}

impl ShallowAlgo {
    pub fn name(&self) -> &'static str {
        match self {
            ShallowAlgo::Svm(_) => "svm",
            ShallowAlgo::Adt(_) => "adt",
            ShallowAlgo::Rf(_) => "rf",
        }
    }

    /// Copy with the learner's seed offset by `k` (ADT has none).
    fn reseeded(&self, k: u64) -> ShallowAlgo {
        match self {
            ShallowAlgo::Svm(h) => ShallowAlgo::Svm(SvmHyper {
                seed: h.seed.wrapping_add(k),
                ..h.clone()
            }),
            ShallowAlgo::Rf(h) => ShallowAlgo::Rf(RfHyper {
                seed: h.seed.wrapping_add(k),
                ..h.clone()
            }),
            ShallowAlgo::Adt(h) => ShallowAlgo::Adt(h.clone()),
        }
    }
}

/// A trained ±1 model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "model")]
pub enum BinaryModel {
    Svm(SvmModel),
    Adt(AdtModel),
    Rf(RfModel),
}

impl BinaryModel {
    pub fn train(x: &Array2<f64>, y: &[i8], algo: &ShallowAlgo) -> Result<BinaryModel> {
        if !(y.contains(&1) && y.contains(&-1)) {
            return Err(FcpError::DegenerateLabels(
                "binary training needs both classes".into(),
            ));
        }
        Ok(match algo {
            ShallowAlgo::Svm(h) => BinaryModel::Svm(train_svm(x, y, h)?),
            ShallowAlgo::Adt(h) => BinaryModel::Adt(train_adt(x, y, h)?),
            ShallowAlgo::Rf(h) => {
                let yl: Vec<i64> = y.iter().map(|&v| i64::from(v)).collect();
                BinaryModel::Rf(train_rf(x, &yl, h)?)
            }
        })
    }

    pub fn n_features(&self) -> usize {
        match self {
            BinaryModel::Svm(m) => m.n_features(),
            BinaryModel::Adt(m) => m.n_features,
            BinaryModel::Rf(m) => m.n_features,
        }
    }

    /// SVM decision value, ADT score, or RF vote fraction for +1.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        match self {
            BinaryModel::Svm(m) => m.decision(x),
            BinaryModel::Adt(m) => m.score(x),
            BinaryModel::Rf(m) => Ok(rf_positive(m, &m.probabilities(x)?)),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(match self {
            BinaryModel::Svm(m) => m.predict(x)?.0,
            BinaryModel::Adt(m) => m.predict(x)?.0,
            BinaryModel::Rf(m) => m.predict(x)?.0 as i8,
        })
    }

    /// P(+1). SVM probabilities are hard (0 or 1).
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        match self {
            BinaryModel::Svm(m) => Ok(if m.predict(x)?.0 == 1 { 1.0 } else { 0.0 }),
            BinaryModel::Adt(m) => m.probability(x),
            BinaryModel::Rf(m) => Ok(rf_positive(m, &m.probabilities(x)?)),
        }
    }
}

fn rf_positive(m: &RfModel, p: &[f64]) -> f64 {
    m.classes
        .iter()
        .position(|&c| c == 1)
        .map_or(0.0, |i| p[i])
}

/// K binary models, model k separating `classes[k]` from the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrModel {
    pub classes: Vec<i64>,
    pub models: Vec<BinaryModel>,
}

pub fn train_multiclass(x: &Array2<f64>, y: &[i64], algo: &ShallowAlgo) -> Result<OvrModel> {
    train_multiclass_with(x, y, None, algo)
}

/// As `train_multiclass`, but `classes` fixes the expected label set; a
/// listed class absent from `y` is a `DegenerateLabels` error.
pub fn train_multiclass_with(
    x: &Array2<f64>,
    y: &[i64],
    classes: Option<&[i64]>,
    algo: &ShallowAlgo,
) -> Result<OvrModel> {
    if x.nrows() != y.len() {
        return Err(FcpError::Shape(format!("{} rows, {} labels", x.nrows(), y.len())));
    }
    let mut present = y.to_vec();
    present.sort_unstable();
    present.dedup();
    let classes = match classes {
        Some(c) => {
            if let Some(missing) = c.iter().find(|k| !present.contains(k)) {
                return Err(FcpError::DegenerateLabels(format!(
                    "class {missing} has no training rows"
                )));
            }
            if let Some(extra) = present.iter().find(|k| !c.contains(k)) {
                return Err(FcpError::Label(format!("unexpected class {extra}")));
            }
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        }
        None => present,
    };
    if classes.len() < 2 {
        return Err(FcpError::DegenerateLabels(
            "multiclass training needs at least two classes".into(),
        ));
    }
    let models = classes
        .par_iter()
        .enumerate()
        .map(|(k, &c)| {
            let yk: Vec<i8> = y.iter().map(|&v| if v == c { 1 } else { -1 }).collect();
            BinaryModel::train(x, &yk, &algo.reseeded(k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrModel { classes, models })
}

impl OvrModel {
    pub fn n_features(&self) -> usize {
        self.models[0].n_features()
    }

    pub fn decisions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.decision(x)).collect()
    }

    /// Argmax of the decision values; ties → lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<i64> {
        Ok(self.classes[argmax_lowest(&self.decisions(x)?)])
    }

    /// Row-stochastic class probabilities in `classes` order.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dec = self.decisions(x)?;
        let k = dec.len();
        let one_hot = |i: usize| {
            let mut p = vec![0.0; k];
            p[i] = 1.0;
            p
        };
        let raw: Vec<f64> = match &self.models[0] {
            BinaryModel::Svm(_) => return Ok(one_hot(argmax_lowest(&dec))),
            BinaryModel::Adt(_) => dec.iter().map(|s| 1.0 / (1.0 + (-2.0 * s).exp())).collect(),
            BinaryModel::Rf(_) => dec,
        };
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            Ok(raw.iter().map(|v| v / total).collect())
        } else {
            Ok(one_hot(argmax_lowest(&raw)))
        }
    }
}
