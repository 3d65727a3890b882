//! A trained classifier bundled with its preprocessing and label vocabulary.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::deep::{train_stack, StackConfig, StackedModel};
use crate::error::{FcpError, Result};
use crate::ingest::{standardize, DesignMatrix, Standardization};
use crate::shallow::forest::argmax_lowest;
use crate::shallow::{train_multiclass, BinaryModel, OvrModel, ShallowAlgo};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    /// Labels ±1 mapping to `label_vocabulary[0]` / `[1]`.
    Binary(BinaryModel),
    Ovr(OvrModel),
    StackedAe(StackedModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model", content = "hyper")]
pub enum Algo {
    Shallow(ShallowAlgo),
    Sae(StackConfig),
}

impl Algo {
    pub fn seed(&self) -> u64 {
        match self {
            Algo::Shallow(ShallowAlgo::Svm(h)) => h.seed,
            Algo::Shallow(ShallowAlgo::Rf(h)) => h.seed,
            Algo::Shallow(ShallowAlgo::Adt(_)) => 0,
            Algo::Sae(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub task: String,
    pub body: ModelBody,
    pub hyperparameters: serde_json::Value,
    pub standardization: Option<Standardization>,
    pub feature_names: Vec<String>,
    pub label_vocabulary: Vec<i64>,
    pub seed: u64,
}

impl TrainedModel {
    pub fn model_type(&self) -> &'static str {
        match &self.body {
            ModelBody::Binary(BinaryModel::Svm(_)) => "svm",
            ModelBody::Binary(BinaryModel::Adt(_)) => "adt",
            ModelBody::Binary(BinaryModel::Rf(_)) => "rf",
            ModelBody::Ovr(_) => "ovr_ensemble",
            ModelBody::StackedAe(_) => "stacked_ae",
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(FcpError::Shape(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        match &self.standardization {
            Some(s) => s.apply_row(x),
            None => Ok(x.to_vec()),
        }
    }

    /// Class probabilities in `label_vocabulary` order.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = self.prepare(x)?;
        match &self.body {
            ModelBody::Binary(m) => {
                let p = m.probability(&x)?;
                Ok(vec![1.0 - p, p])
            }
            ModelBody::Ovr(m) => m.probabilities(&x),
            ModelBody::StackedAe(m) => Ok(m.predict(&x)?.1),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<i64> {
        let p = self.predict_proba(x)?;
        Ok(self.label_vocabulary[argmax_lowest(&p)])
    }

    /// Probability matrix for every row of `x`.
    pub fn predict_proba_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if let (ModelBody::StackedAe(m), None) = (&self.body, &self.standardization) {
            if x.ncols() != self.n_features() {
                return Err(FcpError::Shape(format!(
                    "model expects {} features, got {}",
                    self.n_features(),
                    x.ncols()
                )));
            }
            return m.probabilities(x);
        }
        let k = self.label_vocabulary.len();
        let mut out = Array2::zeros((x.nrows(), k));
        for (i, row) in x.outer_iter().enumerate() {
            let p = self.predict_proba(&row.to_vec())?;
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&p));
        }
        Ok(out)
    }

    pub fn predict_batch(&self, x: &Array2<f64>) -> Result<Vec<i64>> {
        let p = self.predict_proba_batch(x)?;
        Ok(p.outer_iter()
            .map(|r| self.label_vocabulary[argmax_lowest(&r.to_vec())])
            .collect())
    }
}

/// Trains `algo` on `train`. Shallow learners see standardized features and
/// become a single ±1 model for two classes (the larger label is +1) or a
/// one-vs-rest ensemble otherwise; the stacked autoencoder applies its own
/// min-max scaling.
pub fn fit(train: &DesignMatrix, algo: &Algo, task: &str) -> Result<TrainedModel> {
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(FcpError::DegenerateLabels(format!(
            "task {task} needs at least two classes, found {classes:?}"
        )));
    }
    let hyperparameters =
        serde_json::to_value(algo).map_err(|e| FcpError::Config(e.to_string()))?;
    let (body, standardization) = match algo {
        Algo::Shallow(a) => {
            let (z, stats) = standardize(train, None)?;
            let body = if classes.len() == 2 {
                let y: Vec<i8> = z
                    .labels
                    .iter()
                    .map(|&l| if l == classes[1] { 1 } else { -1 })
                    .collect();
                ModelBody::Binary(BinaryModel::train(&z.rows, &y, a)?)
            } else {
                ModelBody::Ovr(train_multiclass(&z.rows, &z.labels, a)?)
            };
            (body, Some(stats))
        }
        Algo::Sae(cfg) => {
            let (m, report) = train_stack(&train.rows, &train.labels, cfg)?;
            log::info!(
                "stacked autoencoder training accuracy {:.4} (before fine-tuning {:.4})",
                report.train_accuracy_after,
                report.train_accuracy_before
            );
            (ModelBody::StackedAe(m), None)
        }
    };
    Ok(TrainedModel {
        task: task.to_string(),
        body,
        hyperparameters,
        standardization,
        feature_names: train.feature_names.clone(),
        label_vocabulary: classes,
        seed: algo.seed(),
    })
}

/// `fit` followed by prediction, with columns reordered to `classes`; the
/// shape expected by `eval::kfold`.
pub fn fit_predict(
    train: &DesignMatrix,
    test: &DesignMatrix,
    classes: &[i64],
    algo: &Algo,
    task: &str,
) -> Result<Array2<f64>> {
    let model = fit(train, algo, task)?;
    let p = model.predict_proba_batch(&test.rows)?;
    let mut out = Array2::zeros((test.n_rows(), classes.len()));
    for (j, label) in model.label_vocabulary.iter().enumerate() {
        let col = classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| FcpError::Label(format!("model class {label} not in {classes:?}")))?;
        out.column_mut(col).assign(&p.column(j));
    }
    Ok(out)
}
