//! Soft-margin kernel SVM trained with sequential minimal optimization.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel family requested at training time; an RBF without `gamma` uses
/// 1 / (D · var(X)) over all entries of X.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum KernelChoice {
    Linear,
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmHyper {
    pub c: f64,
    pub kernel: KernelChoice,
    pub tol: f64,
    /// Consecutive passes without progress before giving up.
    pub max_passes: usize,
    /// Hard cap on full sweeps over the training set.
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        SvmHyper {
            c: 1.0,
            kernel: KernelChoice::Rbf { gamma: None },
            tol: 1e-3,
            max_passes: 5,
            max_sweeps: 10_000,
            seed: 0,
        }
    }
}

impl SvmHyper {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.tol > 0.0 && self.max_passes > 0) {
            return Err(FcpError::Config(format!("invalid SVM hyperparameters {self:?}")));
        }
        if let KernelChoice::Rbf { gamma: Some(g) } = self.kernel {
            if !(g > 0.0) {
                return Err(FcpError::Config(format!("rbf gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }

    pub fn resolve_kernel(&self, x: &Array2<f64>) -> Kernel {
        match self.kernel {
            KernelChoice::Linear => Kernel::Linear,
            KernelChoice::Rbf { gamma: Some(g) } => Kernel::Rbf { gamma: g },
            KernelChoice::Rbf { gamma: None } => {
                let n = x.len().max(1) as f64;
                let mean = x.sum() / n;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let d = x.ncols().max(1) as f64;
                let gamma = if var > 0.0 { 1.0 / (d * var) } else { 1.0 / d };
                Kernel::Rbf { gamma }
            }
        }
    }
}

/// Binary SVM: f(x) = Σ coef_i K(sv_i, x) + bias, with coef_i = α_i y_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Array2<f64>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.support_vectors.ncols()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(FcpError::Shape(format!(
                "SVM expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        let x = ArrayView1::from(x);
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.outer_iter().zip(&self.dual_coefs) {
            f += coef * self.kernel.eval(sv, x);
        }
        Ok(f)
    }

    /// (label in {-1, +1}, decision value); zero maps to +1.
    pub fn predict(&self, x: &[f64]) -> Result<(i8, f64)> {
        let f = self.decision(x)?;
        Ok((if f >= 0.0 { 1 } else { -1 }, f))
    }
}

/// Solver diagnostics.
#[derive(Debug, Clone, Default)]
pub struct SmoTrace {
    /// Dual objective after every accepted pair update (first entry: α = 0).
    pub objective: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Full α vector over the training set.
    pub alphas: Vec<f64>,
}

struct Smo<'a> {
    y: &'a [f64],
    k: Array2<f64>,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    err: Vec<f64>,
    b: f64,
}

impl Smo<'_> {
    fn violates(&self, i: usize) -> bool {
        let r = self.err[i] * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn objective(&self) -> f64 {
        // Σα − ½ Σ_i α_i y_i (f_i − b), with f_i = E_i + y_i
        let mut w = 0.0;
        for i in 0..self.y.len() {
            if self.alpha[i] != 0.0 {
                w += self.alpha[i] - 0.5 * self.alpha[i] * self.y[i] * (self.err[i] + self.y[i] - self.b);
            }
        }
        w
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ei, ej) = (self.err[i], self.err[j]);
        let c = self.c;
        let (lo, hi) = if yi != yj {
            ((aj - ai).max(0.0), (c + aj - ai).min(c))
        } else {
            ((ai + aj - c).max(0.0), (ai + aj).min(c))
        };
        if hi - lo < 1e-12 {
            return false;
        }
        let (kii, kjj, kij) = (self.k[[i, i]], self.k[[j, j]], self.k[[i, j]]);
        let eta = kii + kjj - 2.0 * kij;
        let mut aj_new = if eta > 1e-12 {
            (aj + yj * (ei - ej) / eta).clamp(lo, hi)
        } else {
            // objective is linear along the constraint line: take the better end
            let s = yi * yj;
            let obj = |a: f64| {
                let ai_new = ai + s * (aj - a);
                let d_i = ai_new - ai;
                let d_j = a - aj;
                d_i + d_j
                    - 0.5 * (d_i * d_i * kii + d_j * d_j * kjj + 2.0 * s * d_i * d_j * kij)
                    - yi * d_i * (ei + yi - self.b)
                    - yj * d_j * (ej + yj - self.b)
            };
            let (ol, oh) = (obj(lo), obj(hi));
            if ol > oh + 1e-12 {
                lo
            } else if oh > ol + 1e-12 {
                hi
            } else {
                return false;
            }
        };
        if aj_new < 1e-12 {
            aj_new = 0.0;
        } else if aj_new > c - 1e-12 {
            aj_new = c;
        }
        if (aj_new - aj).abs() < 1e-12 * (aj_new + aj + 1e-12) {
            return false;
        }
        let mut ai_new = ai + yi * yj * (aj - aj_new);
        if ai_new < 1e-12 {
            ai_new = 0.0;
        } else if ai_new > c - 1e-12 {
            ai_new = c;
        }
        let (di, dj) = ((ai_new - ai) * yi, (aj_new - aj) * yj);
        let b1 = self.b - ei - di * kii - dj * kij;
        let b2 = self.b - ej - di * kij - dj * kjj;
        let b_new = if ai_new > 0.0 && ai_new < c {
            b1
        } else if aj_new > 0.0 && aj_new < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.b;
        for k in 0..self.y.len() {
            self.err[k] += di * self.k[[i, k]] + dj * self.k[[j, k]] + db;
        }
        self.alpha[i] = ai_new;
        self.alpha[j] = aj_new;
        self.b = b_new;
        true
    }
}

fn binary_labels(y: &[i8]) -> Result<Vec<f64>> {
    if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(FcpError::Label(format!("SVM labels must be ±1, found {bad}")));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(FcpError::DegenerateLabels(
            "binary training needs both classes".into(),
        ));
    }
    Ok(y.iter().map(|&v| f64::from(v)).collect())
}

pub fn train_svm(x: &Array2<f64>, y: &[i8], hyper: &SvmHyper) -> Result<SvmModel> {
    train_svm_traced(x, y, hyper).map(|(m, _)| m)
}

/// SMO with a random second index. When the random partner makes no
/// progress the remaining indices are scanned from a random offset. Stops
/// once a sweep finds no KKT violation (at `tol`) or after `max_passes`
/// fruitless sweeps.
pub fn train_svm_traced(
    x: &Array2<f64>,
    y: &[i8],
    hyper: &SvmHyper,
) -> Result<(SvmModel, SmoTrace)> {
    hyper.validate()?;
    if x.nrows() != y.len() {
        return Err(FcpError::Shape(format!("{} rows, {} labels", x.nrows(), y.len())));
    }
    let yf = binary_labels(y)?;
    let n = y.len();
    let kernel = hyper.resolve_kernel(x);
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(x.row(i), x.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    let mut smo = Smo {
        y: &yf,
        k,
        c: hyper.c,
        tol: hyper.tol,
        alpha: vec![0.0; n],
        err: yf.iter().map(|v| -v).collect(),
        b: 0.0,
    };
    let mut rng = rng::seeded(hyper.seed);
    let mut trace = SmoTrace {
        objective: vec![0.0],
        ..Default::default()
    };
    let mut idle = 0;
    while trace.sweeps < hyper.max_sweeps {
        trace.sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            if !smo.violates(i) {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let mut ok = smo.take_step(i, j);
            if !ok {
                let start = rng.random_range(0..n);
                for off in 0..n {
                    let j = (start + off) % n;
                    if smo.take_step(i, j) {
                        ok = true;
                        break;
                    }
                }
            }
            if ok {
                changed += 1;
                trace.objective.push(smo.objective());
            }
        }
        if changed == 0 {
            if (0..n).all(|i| !smo.violates(i)) {
                trace.converged = true;
                break;
            }
            idle += 1;
            if idle >= hyper.max_passes {
                break;
            }
        } else {
            idle = 0;
        }
    }
    if !trace.converged {
        log::warn!("SMO stopped after {} sweeps without meeting tol {}", trace.sweeps, hyper.tol);
    }
    let sv: Vec<usize> = (0..n).filter(|&i| smo.alpha[i] > 0.0).collect();
    let model = SvmModel {
        support_vectors: x.select(ndarray::Axis(0), &sv),
        dual_coefs: sv.iter().map(|&i| smo.alpha[i] * yf[i]).collect(),
        bias: smo.b,
        kernel,
        c: hyper.c,
    };
    trace.alphas = smo.alpha;
    Ok((model, trace))
}

/// Dual objective W(α) = Σα − ½ ΣΣ α_i α_j y_i y_j K(x_i, x_j).
pub fn dual_objective(x: &Array2<f64>, y: &[i8], alphas: &[f64], kernel: &Kernel) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alphas[j] == 0.0 {
                continue;
            }
            quad += alphas[i]
                * alphas[j]
                * f64::from(y[i])
                * f64::from(y[j])
                * kernel.eval(x.row(i), x.row(j));
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_pair_linear() {
        let x = array![[-1.0, 0.0], [1.0, 0.0]];
        let hyper = SvmHyper {
            c: 10.0,
            kernel: KernelChoice::Linear,
            ..Default::default()
        };
        let m = train_svm(&x, &[-1, 1], &hyper).unwrap();
        assert!(m.bias.abs() < 1e-6);
        assert_eq!(m.dual_coefs.len(), 2);
        assert!((m.decision(&[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-6);
        assert!((m.decision(&[-1.0, 0.0]).unwrap() + 1.0).abs() < 1e-6);
        let (label, f) = m.predict(&[0.0, 0.0]).unwrap();
        assert!(f.abs() < 1e-6);
        assert_eq!(label, 1);
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            train_svm(&x, &[1, 1], &SvmHyper::default()),
            Err(FcpError::DegenerateLabels(_))
        ));
    }

    #[test]
    fn shape_checked_at_prediction() {
        let x = array![[-1.0], [1.0]];
        let m = train_svm(&x, &[-1, 1], &SvmHyper::default()).unwrap();
        assert!(matches!(m.decision(&[0.0, 1.0]), Err(FcpError::Shape(_))));
    }

    #[test]
    fn default_gamma_scales_with_data() {
        let x = array![[0.0, 2.0], [2.0, 0.0]];
        match SvmHyper::default().resolve_kernel(&x) {
            Kernel::Rbf { gamma } => assert!((gamma - 0.5).abs() < 1e-15),
            k => panic!("{k:?}"),
        }
    }
}
