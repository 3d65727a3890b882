//! Confusion matrices, probability-space metrics and stratified k-fold
//! cross-validation.
//!
//! Class labels passed to `confusion` and `metrics` are indices 0..K.

use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};
use crate::ingest::{csv_err, DesignMatrix};
use crate::rng;
use crate::shallow::forest::argmax_lowest;

const ROW_SUM_TOL: f64 = 1e-6;

/// Entry (i, j) counts rows of true class i predicted as j.
pub fn confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Array2<u64>> {
    if y_true.len() != y_pred.len() {
        return Err(FcpError::Shape(format!(
            "{} truths, {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = Array2::zeros((k, k));
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(FcpError::Label(format!("label pair ({t}, {p}) outside 0..{k}")));
        }
        m[[t, p]] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: i64,
    pub support: u64,
    pub precision: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub macro_precision: f64,
    pub weighted_tp_rate: f64,
    pub weighted_fp_rate: f64,
    pub mae: f64,
    pub rmse: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    /// Replaces the 0..K class ids with `classes`.
    pub fn with_classes(mut self, classes: &[i64]) -> Result<Self> {
        if classes.len() != self.per_class.len() {
            return Err(FcpError::Shape(format!(
                "{} class names for {} classes",
                classes.len(),
                self.per_class.len()
            )));
        }
        for (m, &c) in self.per_class.iter_mut().zip(classes) {
            m.class = c;
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| FcpError::Config(e.to_string()))
    }

    /// `metric,class,value` rows; class is empty for overall figures.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "class", "value"]).map_err(csv_err)?;
        let overall = [
            ("n", self.n as f64),
            ("accuracy", self.accuracy),
            ("weighted_precision", self.weighted_precision),
            ("macro_precision", self.macro_precision),
            ("weighted_tp_rate", self.weighted_tp_rate),
            ("weighted_fp_rate", self.weighted_fp_rate),
            ("mae", self.mae),
            ("rmse", self.rmse),
        ];
        for (name, v) in overall {
            w.write_record([name, "", &v.to_string()]).map_err(csv_err)?;
        }
        for c in &self.per_class {
            let class = c.class.to_string();
            for (name, v) in [
                ("support", c.support as f64),
                ("precision", c.precision),
                ("tp_rate", c.tp_rate),
                ("fp_rate", c.fp_rate),
            ] {
                w.write_record([name, &class, &v.to_string()]).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| FcpError::io("<metrics csv>", e))
    }

    /// Square table with a `true\pred` corner cell.
    pub fn write_confusion_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true\\pred".to_string()];
        header.extend(self.per_class.iter().map(|c| c.class.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (c, row) in self.per_class.iter().zip(&self.confusion) {
            let mut rec = vec![c.class.to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| FcpError::io("<confusion csv>", e))
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Predicted label is the row argmax (ties → lowest). MAE and RMSE compare
/// each probability row with the one-hot truth, averaged over N·K terms.
pub fn metrics(y_true: &[usize], probs: &Array2<f64>) -> Result<MetricsReport> {
    let (n, k) = probs.dim();
    if y_true.len() != n {
        return Err(FcpError::Shape(format!("{} truths, {n} probability rows", y_true.len())));
    }
    if k == 0 {
        return Err(FcpError::Shape("probability matrix has no columns".into()));
    }
    for (i, row) in probs.outer_iter().enumerate() {
        let s = row.sum();
        if !(s - 1.0).abs().le(&ROW_SUM_TOL) || row.iter().any(|p| !p.is_finite()) {
            return Err(FcpError::NonStochasticRows(format!("row {i} sums to {s}")));
        }
    }
    let pred: Vec<usize> = probs
        .outer_iter()
        .map(|r| argmax_lowest(&r.to_vec()))
        .collect();
    let cm = confusion(y_true, &pred, k)?;

    let (mut abs, mut sq) = (0.0, 0.0);
    for (row, &t) in probs.outer_iter().zip(y_true) {
        for (j, &p) in row.iter().enumerate() {
            let d = p - if j == t { 1.0 } else { 0.0 };
            abs += d.abs();
            sq += d * d;
        }
    }
    let terms = (n * k) as f64;
    let nf = n as f64;
    let correct: u64 = (0..k).map(|i| cm[[i, i]]).sum();

    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm[[c, c]] as f64;
        let support = cm.row(c).sum();
        let predicted = cm.column(c).sum() as f64;
        let fp = predicted - tp;
        let negatives = nf - support as f64;
        per_class.push(ClassMetrics {
            class: c as i64,
            support,
            precision: ratio(tp, predicted),
            tp_rate: ratio(tp, support as f64),
            fp_rate: ratio(fp, negatives),
        });
    }
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        ratio(per_class.iter().map(|m| m.support as f64 * f(m)).sum(), nf)
    };
    Ok(MetricsReport {
        n: n as u64,
        accuracy: ratio(correct as f64, nf),
        weighted_precision: weighted(|m| m.precision),
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k as f64,
        weighted_tp_rate: weighted(|m| m.tp_rate),
        weighted_fp_rate: weighted(|m| m.fp_rate),
        mae: if n == 0 { 0.0 } else { abs / terms },
        rmse: if n == 0 { 0.0 } else { (sq / terms).sqrt() },
        confusion: cm.outer_iter().map(|r| r.to_vec()).collect(),
        per_class,
    })
}

/// Held-out predictions: true labels plus one probability column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub ids: Vec<u64>,
    pub classes: Vec<i64>,
    /// Indices into `classes`.
    pub truth: Vec<usize>,
    pub probs: Array2<f64>,
}

impl Predictions {
    /// Reads `id,label,p_<class>...`.
    pub fn read_csv<R: std::io::Read>(input: R, name: &str) -> Result<Predictions> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| FcpError::parse(name, 1, e.to_string()))?
            .clone();
        if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
            return Err(FcpError::parse(name, 1, "expected header id,label,p_<class>..."));
        }
        let classes = header
            .iter()
            .skip(2)
            .map(|h| {
                h.strip_prefix("p_")
                    .and_then(|c| c.parse::<i64>().ok())
                    .ok_or_else(|| FcpError::parse(name, 1, format!("bad probability column {h:?}")))
            })
            .collect::<Result<Vec<i64>>>()?;
        let k = classes.len();
        let (mut ids, mut truth, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| FcpError::parse(name, 0, e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != k + 2 {
                return Err(FcpError::parse(name, line, format!("expected {} fields, found {}", k + 2, rec.len())));
            }
            ids.push(crate::ingest::parse_field::<u64>(&rec[0], name, line, "id")?);
            let label = crate::ingest::parse_field::<i64>(&rec[1], name, line, "label")?;
            let t = classes
                .iter()
                .position(|&c| c == label)
                .ok_or_else(|| FcpError::Label(format!("{name}:{line}: label {label} has no column")))?;
            truth.push(t);
            for j in 0..k {
                values.push(crate::ingest::parse_field::<f64>(&rec[j + 2], name, line, "probability")?);
            }
        }
        let probs = Array2::from_shape_vec((ids.len(), k), values).map_err(|e| FcpError::Shape(e.to_string()))?;
        Ok(Predictions { ids, classes, truth, probs })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(self.classes.iter().map(|c| format!("p_{c}")));
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.probs.outer_iter().enumerate() {
            let mut rec = vec![self.ids[i].to_string(), self.classes[self.truth[i]].to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| FcpError::io("<predictions csv>", e))
    }

    pub fn report(&self) -> Result<MetricsReport> {
        metrics(&self.truth, &self.probs)?.with_classes(&self.classes)
    }
}

/// Stratified fold index per row: every class is shuffled and dealt round
/// robin, continuing the rotation across classes so fold sizes differ by at
/// most one.
pub fn stratified_folds(labels: &[i64], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(FcpError::Config(format!("k-fold needs k ≥ 2, got {k}")));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut r = rng::seeded(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < k {
            return Err(FcpError::Stratify(format!(
                "class {c} has {} rows, fewer than {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut r);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfoldReport {
    pub k: usize,
    pub seed: u64,
    pub classes: Vec<i64>,
    pub pooled: MetricsReport,
    /// Unweighted mean of per-fold accuracies.
    pub mean_fold_accuracy: f64,
    pub folds: Vec<MetricsReport>,
    pub assignment: Vec<usize>,
}

impl KfoldReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| FcpError::Config(e.to_string()))
    }
}

/// Trains on the first matrix and returns class probabilities for every row
/// of the second, columns ordered as `classes`.
pub trait FoldTrainer: Sync {
    fn fit_predict(
        &self,
        train: &DesignMatrix,
        test: &DesignMatrix,
        classes: &[i64],
    ) -> Result<Array2<f64>>;
}

impl<F> FoldTrainer for F
where
    F: Fn(&DesignMatrix, &DesignMatrix, &[i64]) -> Result<Array2<f64>> + Sync,
{
    fn fit_predict(
        &self,
        train: &DesignMatrix,
        test: &DesignMatrix,
        classes: &[i64],
    ) -> Result<Array2<f64>> {
        self(train, test, classes)
    }
}

/// Stratified k-fold cross-validation. The headline report pools the
/// held-out predictions of all folds.
pub fn kfold(data: &DesignMatrix, k: usize, trainer: &dyn FoldTrainer, seed: u64) -> Result<KfoldReport> {
    let assignment = stratified_folds(&data.labels, k, seed)?;
    let classes = data.classes();
    let truth: Vec<usize> = data
        .labels
        .iter()
        .map(|l| classes.binary_search(l).expect("own label"))
        .collect();
    let results: Vec<(Vec<usize>, Array2<f64>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let test_idx: Vec<usize> = (0..data.n_rows()).filter(|&i| assignment[i] == f).collect();
            let train_idx: Vec<usize> = (0..data.n_rows()).filter(|&i| assignment[i] != f).collect();
            let probs = trainer.fit_predict(&data.select(&train_idx), &data.select(&test_idx), &classes)?;
            if probs.dim() != (test_idx.len(), classes.len()) {
                return Err(FcpError::Shape(format!(
                    "fold {f}: trainer returned {:?}, expected ({}, {})",
                    probs.dim(),
                    test_idx.len(),
                    classes.len()
                )));
            }
            Ok((test_idx, probs))
        })
        .collect::<Result<_>>()?;

    let mut folds = Vec::with_capacity(k);
    let mut pooled_truth = Vec::new();
    let mut pooled_rows = Vec::new();
    for (idx, probs) in &results {
        let t: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
        folds.push(metrics(&t, probs)?.with_classes(&classes)?);
        pooled_truth.extend(t);
        pooled_rows.extend(probs.iter().copied());
    }
    let pooled_probs = Array2::from_shape_vec((pooled_truth.len(), classes.len()), pooled_rows)
        .map_err(|e| FcpError::Shape(e.to_string()))?;
    let pooled = metrics(&pooled_truth, &pooled_probs)?.with_classes(&classes)?;
    let mean_fold_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / k as f64;
    Ok(KfoldReport {
        k,
        seed,
        classes,
        pooled,
        mean_fold_accuracy,
        folds,
        assignment,
    })
}
