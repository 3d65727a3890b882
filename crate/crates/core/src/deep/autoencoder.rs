use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::{descend, DescentTrace, GdConfig};
use super::{glorot, sigmoid_inplace, Flat};
use crate::error::{FcpError, Result};

const RHO_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseHyper {
    pub rho: f64,
    pub beta: f64,
    pub l2: f64,
    pub epochs: usize,
    pub optimizer: GdConfig,
}

impl Default for SparseHyper {
    fn default() -> Self {
        SparseHyper {
            rho: 0.1,
            beta: 4.0,
            l2: 0.001,
            epochs: 400,
            optimizer: GdConfig::default(),
        }
    }
}

impl SparseHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0 && self.beta >= 0.0 && self.l2 >= 0.0) {
            return Err(FcpError::Config(format!(
                "need 0 < rho < 1, beta ≥ 0, l2 ≥ 0 (got {}, {}, {})",
                self.rho, self.beta, self.l2
            )));
        }
        self.optimizer.validate()
    }
}

/// Sigmoid encoder/decoder pair: h = σ(W1 x + b1), r = σ(W2 h + b2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderLayer {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Encoder half of a trained layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Encoder {
    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(FcpError::Shape(format!(
                "encoder expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut h = x.dot(&self.w.t()) + &self.b;
        sigmoid_inplace(&mut h);
        Ok(h)
    }
}

impl AutoencoderLayer {
    pub fn zeros(d: usize, h: usize) -> Self {
        AutoencoderLayer {
            w1: Array2::zeros((h, d)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((d, h)),
            b2: Array1::zeros(d),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(d: usize, h: usize, rng: &mut R) -> Self {
        AutoencoderLayer {
            w1: glorot(h, d, rng),
            b1: Array1::zeros(h),
            w2: glorot(d, h, rng),
            b2: Array1::zeros(d),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn encoder(&self) -> Encoder {
        Encoder {
            w: self.w1.clone(),
            b: self.b1.clone(),
        }
    }

    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.nrows() == 0 {
            return Err(FcpError::Shape("empty batch".into()));
        }
        if x.ncols() != self.input_dim() {
            return Err(FcpError::Shape(format!(
                "autoencoder expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let mut h = x.dot(&self.w1.t()) + &self.b1;
        sigmoid_inplace(&mut h);
        Ok(h)
    }

    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let h = self.encode(x)?;
        let mut r = h.dot(&self.w2.t()) + &self.b2;
        sigmoid_inplace(&mut r);
        Ok(r)
    }

    /// Mean squared reconstruction error over all entries.
    pub fn reconstruction_mse(&self, x: &Array2<f64>) -> Result<f64> {
        let r = self.reconstruct(x)?;
        Ok((&r - x).mapv(|v| v * v).mean().unwrap_or(0.0))
    }

    fn shapes(&self) -> [(usize, usize); 4] {
        let (h, d) = (self.hidden_dim(), self.input_dim());
        [(h, d), (h, 1), (d, h), (d, 1)]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut f = Flat::default();
        f.push2(&self.w1);
        f.push1(&self.b1);
        f.push2(&self.w2);
        f.push1(&self.b2);
        f.0
    }

    pub fn from_flat(&self, theta: &[f64]) -> AutoencoderLayer {
        let [s1, s2, s3, s4] = self.shapes();
        let mut at = 0;
        AutoencoderLayer {
            w1: Flat::take2(theta, &mut at, s1),
            b1: Flat::take1(theta, &mut at, s2.0),
            w2: Flat::take2(theta, &mut at, s3),
            b2: Flat::take1(theta, &mut at, s4.0),
        }
    }
}

fn kl(rho: f64, rho_hat: f64) -> f64 {
    rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln()
}

pub fn ae_loss(layer: &AutoencoderLayer, x: &Array2<f64>, hyper: &SparseHyper) -> Result<f64> {
    Ok(ae_loss_and_grad(layer, x, hyper)?.0)
}

pub fn ae_grad(
    layer: &AutoencoderLayer,
    x: &Array2<f64>,
    hyper: &SparseHyper,
) -> Result<AutoencoderLayer> {
    Ok(ae_loss_and_grad(layer, x, hyper)?.1)
}

/// Loss (1/N)Σ‖x−r‖²/2 + β Σ_j KL(ρ‖ρ̂_j) + (λ/2)(‖W1‖² + ‖W2‖²) and its
/// gradient, returned in the layer's own shape.
pub fn ae_loss_and_grad(
    layer: &AutoencoderLayer,
    x: &Array2<f64>,
    hyper: &SparseHyper,
) -> Result<(f64, AutoencoderLayer)> {
    layer.check(x)?;
    let n = x.nrows() as f64;
    let a = layer.encode(x)?;
    let mut r = a.dot(&layer.w2.t()) + &layer.b2;
    sigmoid_inplace(&mut r);
    let diff = &r - x;
    let data = 0.5 * diff.iter().map(|v| v * v).sum::<f64>() / n;

    let rho_hat = a
        .mean_axis(Axis(0))
        .expect("nonempty batch")
        .mapv(|v| v.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP));
    let sparsity: f64 = rho_hat.iter().map(|&p| kl(hyper.rho, p)).sum();
    let decay = 0.5
        * hyper.l2
        * (layer.w1.iter().map(|v| v * v).sum::<f64>() + layer.w2.iter().map(|v| v * v).sum::<f64>());
    let loss = data + hyper.beta * sparsity + decay;

    let mut dz2 = diff;
    dz2.zip_mut_with(&r, |d, &rv| *d *= rv * (1.0 - rv) / n);
    let gw2 = dz2.t().dot(&a) + &(&layer.w2 * hyper.l2);
    let gb2 = dz2.sum_axis(Axis(0));
    let sp = rho_hat.mapv(|p| hyper.beta * (-hyper.rho / p + (1.0 - hyper.rho) / (1.0 - p)) / n);
    let mut dz1 = dz2.dot(&layer.w2) + &sp;
    dz1.zip_mut_with(&a, |d, &av| *d *= av * (1.0 - av));
    let gw1 = dz1.t().dot(x) + &(&layer.w1 * hyper.l2);
    let gb1 = dz1.sum_axis(Axis(0));
    Ok((
        loss,
        AutoencoderLayer {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct AeTrained {
    pub layer: AutoencoderLayer,
    pub trace: DescentTrace,
}

pub fn ae_train<R: Rng>(
    x: &Array2<f64>,
    size: usize,
    hyper: &SparseHyper,
    rng: &mut R,
) -> Result<AeTrained> {
    hyper.validate()?;
    if size == 0 {
        return Err(FcpError::Config("hidden size must be at least 1".into()));
    }
    let init = AutoencoderLayer::init(x.ncols(), size, rng);
    init.check(x)?;
    let mut theta = init.to_flat();
    let trace = descend(&mut theta, hyper.epochs, &hyper.optimizer, |p| {
        let l = init.from_flat(p);
        let (loss, g) = ae_loss_and_grad(&l, x, hyper).expect("shape checked");
        (loss, g.to_flat())
    })?;
    Ok(AeTrained {
        layer: init.from_flat(&theta),
        trace,
    })
}
