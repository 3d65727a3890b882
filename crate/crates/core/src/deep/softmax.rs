use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::{descend, DescentTrace, GdConfig};
use super::{glorot, Flat};
use crate::error::{FcpError, Result};

/// Linear layer followed by a softmax over K classes (indices 0..K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxHead {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

impl SoftmaxHead {
    pub fn n_classes(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn probabilities(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        if h.ncols() != self.input_dim() {
            return Err(FcpError::Shape(format!(
                "softmax expects {} inputs, got {}",
                self.input_dim(),
                h.ncols()
            )));
        }
        let mut z = h.dot(&self.w.t()) + &self.b;
        softmax_rows(&mut z);
        Ok(z)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut f = Flat::default();
        f.push2(&self.w);
        f.push1(&self.b);
        f.0
    }

    pub fn from_flat(&self, theta: &[f64]) -> SoftmaxHead {
        let mut at = 0;
        SoftmaxHead {
            w: Flat::take2(theta, &mut at, self.w.dim()),
            b: Flat::take1(theta, &mut at, self.b.len()),
        }
    }
}

pub(crate) fn check_targets(y: &[usize], k: usize, n: usize) -> Result<()> {
    if y.len() != n {
        return Err(FcpError::Shape(format!("{n} rows, {} labels", y.len())));
    }
    if k < 2 {
        return Err(FcpError::DegenerateLabels("softmax needs at least two classes".into()));
    }
    if let Some(bad) = y.iter().find(|&&v| v >= k) {
        return Err(FcpError::Label(format!("class index {bad} outside 0..{k}")));
    }
    Ok(())
}

/// Mean cross-entropy and its gradient given predicted probabilities.
/// Returns (loss, dL/dz) where z are the logits.
pub(crate) fn cross_entropy(p: &Array2<f64>, y: &[usize]) -> (f64, Array2<f64>) {
    let n = p.nrows() as f64;
    let mut loss = 0.0;
    let mut dz = p.clone();
    for (i, &c) in y.iter().enumerate() {
        loss -= p[[i, c]].max(f64::MIN_POSITIVE).ln();
        dz[[i, c]] -= 1.0;
    }
    dz.mapv_inplace(|v| v / n);
    (loss / n, dz)
}

pub fn softmax_loss_and_grad(
    head: &SoftmaxHead,
    h: &Array2<f64>,
    y: &[usize],
) -> Result<(f64, SoftmaxHead)> {
    check_targets(y, head.n_classes(), h.nrows())?;
    let p = head.probabilities(h)?;
    let (loss, dz) = cross_entropy(&p, y);
    Ok((
        loss,
        SoftmaxHead {
            w: dz.t().dot(h),
            b: dz.sum_axis(Axis(0)),
        },
    ))
}

#[derive(Debug, Clone)]
pub struct SoftmaxTrained {
    pub head: SoftmaxHead,
    pub trace: DescentTrace,
}

pub fn softmax_train<R: Rng>(
    h: &Array2<f64>,
    y: &[usize],
    k: usize,
    epochs: usize,
    optimizer: &GdConfig,
    rng: &mut R,
) -> Result<SoftmaxTrained> {
    check_targets(y, k, h.nrows())?;
    let init = SoftmaxHead {
        w: glorot(k, h.ncols(), rng),
        b: Array1::zeros(k),
    };
    let mut theta = init.to_flat();
    let trace = descend(&mut theta, epochs, optimizer, |p| {
        let (l, g) = softmax_loss_and_grad(&init.from_flat(p), h, y).expect("checked");
        (l, g.to_flat())
    })?;
    Ok(SoftmaxTrained {
        head: init.from_flat(&theta),
        trace,
    })
}
