use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::autoencoder::{ae_train, AutoencoderLayer, Encoder, SparseHyper};
use super::optim::{descend, DescentTrace, GdConfig};
use super::softmax::{check_targets, cross_entropy, softmax_rows, softmax_train, SoftmaxHead};
use super::{Flat, MinMax};
use crate::error::{FcpError, Result};
use crate::rng;
use crate::shallow::forest::argmax_lowest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    /// Hidden units per autoencoder, input side first.
    pub sizes: Vec<usize>,
    /// One entry per autoencoder.
    pub layers: Vec<SparseHyper>,
    pub softmax_epochs: usize,
    pub softmax_optimizer: GdConfig,
    pub finetune_epochs: usize,
    pub finetune_optimizer: GdConfig,
    pub seed: u64,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            sizes: vec![100, 50],
            layers: vec![
                SparseHyper::default(),
                SparseHyper {
                    epochs: 100,
                    ..SparseHyper::default()
                },
            ],
            softmax_epochs: 400,
            softmax_optimizer: GdConfig::default(),
            finetune_epochs: 400,
            finetune_optimizer: GdConfig::default(),
            seed: 0,
        }
    }
}

impl StackConfig {
    /// Same β and ρ on every layer.
    pub fn with_sparsity(mut self, beta: f64, rho: f64) -> Self {
        for l in &mut self.layers {
            l.beta = beta;
            l.rho = rho;
        }
        self
    }

    pub fn with_sizes(mut self, sizes: Vec<usize>) -> Self {
        let template = self.layers.last().copied().unwrap_or_default();
        self.layers.resize(sizes.len(), template);
        self.sizes = sizes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(FcpError::Config("every hidden size must be at least 1".into()));
        }
        if self.layers.len() != self.sizes.len() {
            return Err(FcpError::Config(format!(
                "{} hidden sizes but {} layer settings",
                self.sizes.len(),
                self.layers.len()
            )));
        }
        for w in self.sizes.windows(2) {
            if w[1] >= w[0] {
                log::warn!("hidden layer of {} units follows one of {}", w[1], w[0]);
            }
        }
        self.layers.iter().try_for_each(SparseHyper::validate)?;
        self.softmax_optimizer.validate()?;
        self.finetune_optimizer.validate()
    }
}

/// Min-max scaling, sigmoid encoders and a softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub scaling: MinMax,
    pub encoders: Vec<Encoder>,
    pub softmax: SoftmaxHead,
    pub classes: Vec<i64>,
    pub fine_tuned: bool,
}

#[derive(Debug, Clone)]
pub struct StackReport {
    /// Pretrained layers with their decoders, before fine-tuning.
    pub pretrained: Vec<AutoencoderLayer>,
    pub ae_traces: Vec<DescentTrace>,
    pub softmax_trace: DescentTrace,
    pub finetune_trace: DescentTrace,
    pub train_accuracy_before: f64,
    pub train_accuracy_after: f64,
    /// Fine-tuning lowered training accuracy by more than 0.01 and was undone.
    pub finetune_reverted: bool,
}

impl StackedModel {
    pub fn input_dim(&self) -> usize {
        self.scaling.dim()
    }

    /// Deepest hidden activation for already-scaled inputs.
    pub fn hidden_scaled(&self, xs: &Array2<f64>) -> Result<Array2<f64>> {
        let mut h = xs.clone();
        for e in &self.encoders {
            h = e.forward(&h)?;
        }
        Ok(h)
    }

    /// Class probabilities (columns in `classes` order) for raw inputs.
    pub fn probabilities(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let xs = self.scaling.apply(x)?;
        self.softmax.probabilities(&self.hidden_scaled(&xs)?)
    }

    pub fn predict(&self, x: &[f64]) -> Result<(i64, Vec<f64>)> {
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| FcpError::Shape(e.to_string()))?;
        let p = self.probabilities(&row)?.row(0).to_vec();
        Ok((self.classes[argmax_lowest(&p)], p))
    }

    pub fn predict_batch(&self, x: &Array2<f64>) -> Result<Vec<i64>> {
        let p = self.probabilities(x)?;
        Ok(p.outer_iter()
            .map(|r| self.classes[argmax_lowest(r.as_slice().expect("standard layout"))])
            .collect())
    }

    /// Encoder and softmax parameters, input side first.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut f = Flat::default();
        for e in &self.encoders {
            f.push2(&e.w);
            f.push1(&e.b);
        }
        f.push2(&self.softmax.w);
        f.push1(&self.softmax.b);
        f.0
    }

    pub fn with_params(&self, theta: &[f64]) -> StackedModel {
        let mut at = 0;
        let encoders = self
            .encoders
            .iter()
            .map(|e| Encoder {
                w: Flat::take2(theta, &mut at, e.w.dim()),
                b: Flat::take1(theta, &mut at, e.b.len()),
            })
            .collect();
        let softmax = SoftmaxHead {
            w: Flat::take2(theta, &mut at, self.softmax.w.dim()),
            b: Flat::take1(theta, &mut at, self.softmax.b.len()),
        };
        StackedModel {
            encoders,
            softmax,
            ..self.clone()
        }
    }
}

/// Cross-entropy of the whole stack on scaled inputs and its gradient with
/// respect to `params_flat`.
pub fn finetune_loss_and_grad(
    model: &StackedModel,
    xs: &Array2<f64>,
    y: &[usize],
) -> Result<(f64, Vec<f64>)> {
    check_targets(y, model.softmax.n_classes(), xs.nrows())?;
    let mut acts = vec![xs.clone()];
    for e in &model.encoders {
        let next = e.forward(acts.last().expect("nonempty"))?;
        acts.push(next);
    }
    let top = acts.last().expect("nonempty");
    let mut p = top.dot(&model.softmax.w.t()) + &model.softmax.b;
    softmax_rows(&mut p);
    let (loss, dz) = cross_entropy(&p, y);

    let mut grads: Vec<(Array2<f64>, ndarray::Array1<f64>)> = Vec::new();
    grads.push((dz.t().dot(top), dz.sum_axis(Axis(0))));
    let mut da = dz.dot(&model.softmax.w);
    for (l, e) in model.encoders.iter().enumerate().rev() {
        let a = &acts[l + 1];
        let mut dzl = da;
        dzl.zip_mut_with(a, |d, &av| *d *= av * (1.0 - av));
        grads.push((dzl.t().dot(&acts[l]), dzl.sum_axis(Axis(0))));
        da = dzl.dot(&e.w);
    }
    let mut f = Flat::default();
    for (w, b) in grads.iter().rev() {
        f.push2(w);
        f.push1(b);
    }
    Ok((loss, f.0))
}

fn accuracy(model: &StackedModel, xs: &Array2<f64>, y: &[usize]) -> Result<f64> {
    let p = model.softmax.probabilities(&model.hidden_scaled(xs)?)?;
    let hits = p
        .outer_iter()
        .zip(y)
        .filter(|(r, &c)| argmax_lowest(r.as_slice().expect("standard layout")) == c)
        .count();
    Ok(hits as f64 / y.len() as f64)
}

/// Greedy layer-wise pretraining, softmax on the deepest code, then
/// end-to-end fine-tuning on cross-entropy. Layer i is initialized from
/// stream i of the seed and the softmax head from stream `sizes.len()`.
pub fn train_stack(x: &Array2<f64>, y: &[i64], cfg: &StackConfig) -> Result<(StackedModel, StackReport)> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(FcpError::Shape(format!("{} rows, {} labels", x.nrows(), y.len())));
    }
    let (classes, yi) = crate::shallow::forest::encode_labels(y);
    if classes.len() < 2 {
        return Err(FcpError::DegenerateLabels(
            "severity model needs at least two classes".into(),
        ));
    }
    let scaling = MinMax::fit(x);
    let xs = scaling.apply(x)?;

    let mut pretrained = Vec::new();
    let mut ae_traces = Vec::new();
    let mut h = xs.clone();
    for (i, (&size, hyper)) in cfg.sizes.iter().zip(&cfg.layers).enumerate() {
        let t = ae_train(&h, size, hyper, &mut rng::stream(cfg.seed, i as u64))?;
        log::info!(
            "autoencoder {} ({} → {}): loss {:.6} after {} epochs",
            i + 1,
            h.ncols(),
            size,
            t.trace.losses.last().copied().unwrap_or(f64::NAN),
            t.trace.losses.len().saturating_sub(1)
        );
        h = t.layer.encode(&h)?;
        pretrained.push(t.layer);
        ae_traces.push(t.trace);
    }
    let sm = softmax_train(
        &h,
        &yi,
        classes.len(),
        cfg.softmax_epochs,
        &cfg.softmax_optimizer,
        &mut rng::stream(cfg.seed, cfg.sizes.len() as u64),
    )?;
    let stacked = StackedModel {
        scaling,
        encoders: pretrained.iter().map(AutoencoderLayer::encoder).collect(),
        softmax: sm.head,
        classes,
        fine_tuned: false,
    };
    let before = accuracy(&stacked, &xs, &yi)?;

    let mut theta = stacked.params_flat();
    let finetune_trace = descend(&mut theta, cfg.finetune_epochs, &cfg.finetune_optimizer, |p| {
        finetune_loss_and_grad(&stacked.with_params(p), &xs, &yi).expect("checked")
    })?;
    let mut tuned = stacked.with_params(&theta);
    tuned.fine_tuned = cfg.finetune_epochs > 0;
    let after = accuracy(&tuned, &xs, &yi)?;
    let reverted = after < before - 0.01;
    let model = if reverted {
        log::warn!("fine-tuning lowered training accuracy from {before:.4} to {after:.4}; keeping the pretrained stack");
        stacked
    } else {
        tuned
    };
    let report = StackReport {
        pretrained,
        ae_traces,
        softmax_trace: sm.trace,
        finetune_trace,
        train_accuracy_before: before,
        train_accuracy_after: if reverted { before } else { after },
        finetune_reverted: reverted,
    };
    Ok((model, report))
}
