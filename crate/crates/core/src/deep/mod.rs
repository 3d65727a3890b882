//! Sparse autoencoders, greedy stacking, softmax head and fine-tuning.

mod autoencoder;
mod optim;
mod softmax;
mod stack;
mod sweep;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use autoencoder::{
    ae_grad, ae_loss, ae_loss_and_grad, ae_train, AeTrained, AutoencoderLayer, Encoder,
    SparseHyper,
};
pub use optim::{descend, DescentTrace, GdConfig};
pub use softmax::{softmax_loss_and_grad, softmax_rows, softmax_train, SoftmaxHead, SoftmaxTrained};
pub use stack::{finetune_loss_and_grad, train_stack, StackConfig, StackReport, StackedModel};
pub use sweep::{
    sweep_hidden_sizes, sweep_sparsity, write_size_csv, write_sparsity_csv, SizeCell,
    SparsityCell, SweepData,
};

use crate::error::{FcpError, Result};

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sigmoid_inplace(m: &mut Array2<f64>) {
    m.mapv_inplace(sigmoid);
}

/// Uniform in ±√(6 / (fan_in + fan_out)).
pub(crate) fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..=a))
}

/// Flat parameter vector, row-major, in push order.
#[derive(Default)]
pub(crate) struct Flat(pub Vec<f64>);

impl Flat {
    pub fn push2(&mut self, m: &Array2<f64>) {
        self.0.extend(m.iter());
    }

    pub fn push1(&mut self, v: &Array1<f64>) {
        self.0.extend(v.iter());
    }

    pub fn take2(theta: &[f64], at: &mut usize, shape: (usize, usize)) -> Array2<f64> {
        let n = shape.0 * shape.1;
        let m = Array2::from_shape_vec(shape, theta[*at..*at + n].to_vec()).expect("sized");
        *at += n;
        m
    }

    pub fn take1(theta: &[f64], at: &mut usize, len: usize) -> Array1<f64> {
        let v = Array1::from(theta[*at..*at + len].to_vec());
        *at += len;
        v
    }
}

/// Per-column min-max scaling to [0, 1]; constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl MinMax {
    pub fn fit(x: &Array2<f64>) -> MinMax {
        let mut min = Vec::with_capacity(x.ncols());
        let mut range = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
            min.push(lo);
            range.push(if hi > lo { hi - lo } else { 1.0 });
        }
        MinMax { min, range }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Test-time values outside the fitted range are not clipped.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(FcpError::Shape(format!(
                "scaling has {} columns, input has {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.min[j]) / self.range[j];
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn minmax_unit_interval() {
        let x = array![[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]];
        let s = MinMax::fit(&x);
        let y = s.apply(&x).unwrap();
        assert_eq!(y, array![[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
    }
}
