use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};
use crate::rng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Per-dimension bandwidth selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// h_j = σ_j (4 / ((D + 2) M))^(1 / (D + 4))
    #[default]
    Silverman,
    /// h_j = σ_j M^(-1 / (D + 4))
    Scott,
    Explicit(Vec<f64>),
}

/// Gaussian product-kernel density estimate over `samples` (M × D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub samples: Array2<f64>,
    pub bandwidth: Vec<f64>,
    pub class_label: Option<u32>,
}

/// Sample standard deviation (n − 1 denominator) per column.
fn column_sd(samples: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let m = samples.nrows() as f64;
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for col in samples.axis_iter(Axis(1)) {
        let mu = col.sum() / m;
        let ss = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
        means.push(mu);
        sds.push((ss / (m - 1.0)).sqrt());
    }
    (means, sds)
}

pub fn fit_kde(samples: &Array2<f64>, rule: &BandwidthRule) -> Result<KdeModel> {
    let (m, d) = samples.dim();
    if m == 0 || d == 0 {
        return Err(FcpError::Shape(format!("cannot fit a KDE on a {m}×{d} sample")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(FcpError::Shape("KDE samples contain non-finite values".into()));
    }
    let bandwidth = match rule {
        BandwidthRule::Explicit(h) => {
            if h.len() != d {
                return Err(FcpError::Shape(format!(
                    "{} bandwidths for {d} dimensions",
                    h.len()
                )));
            }
            if h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(FcpError::Config("bandwidths must be positive".into()));
            }
            h.clone()
        }
        BandwidthRule::Silverman | BandwidthRule::Scott => {
            if m < 2 {
                return Err(FcpError::Config(
                    "a single sample needs an explicit bandwidth".into(),
                ));
            }
            let (mf, df) = (m as f64, d as f64);
            let factor = match rule {
                BandwidthRule::Silverman => (4.0 / ((df + 2.0) * mf)).powf(1.0 / (df + 4.0)),
                _ => mf.powf(-1.0 / (df + 4.0)),
            };
            let (means, sds) = column_sd(samples);
            sds.iter()
                .zip(&means)
                .enumerate()
                .map(|(j, (&sd, &mu))| {
                    let h = sd * factor;
                    if h > 0.0 {
                        h
                    } else {
                        let floor = 1e-6 * (1.0 + mu.abs());
                        log::warn!("dimension {j} has zero variance; bandwidth floored to {floor:e}");
                        floor
                    }
                })
                .collect()
        }
    };
    Ok(KdeModel {
        samples: samples.clone(),
        bandwidth,
        class_label: None,
    })
}

impl KdeModel {
    pub fn with_class(mut self, class: u32) -> Self {
        self.class_label = Some(class);
        self
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(FcpError::Shape(format!(
                "KDE has {} dimensions, point has {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Log density, via log-sum-exp over kernels so it stays finite far from the data.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let norm: f64 = self
            .bandwidth
            .iter()
            .map(|h| h.ln() + LN_SQRT_2PI)
            .sum();
        let mut terms = Vec::with_capacity(self.samples.nrows());
        for s in self.samples.outer_iter() {
            let mut q = 0.0;
            for ((xj, sj), hj) in x.iter().zip(s.iter()).zip(&self.bandwidth) {
                let z = (xj - sj) / hj;
                q += z * z;
            }
            terms.push(-0.5 * q);
        }
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        Ok(max + sum.ln() - (self.samples.nrows() as f64).ln() - norm)
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    /// Exact draws from the mixture: a uniformly chosen kernel centre plus N(0, h²) noise.
    pub fn sample_iid<R: Rng>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let (m, d) = self.samples.dim();
        let mut out = Array2::zeros((n, d));
        for mut row in out.rows_mut() {
            let i = rng.random_range(0..m);
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                row[j] = self.samples[[i, j]] + self.bandwidth[j] * z;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub thin: usize,
    pub proposal_scale: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            burn_in: 1000,
            thin: 10,
            proposal_scale: 1.0,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(FcpError::Config("thin must be at least 1".into()));
        }
        if !(self.proposal_scale.is_finite() && self.proposal_scale > 0.0) {
            return Err(FcpError::Config(format!(
                "proposal_scale must be positive, got {}",
                self.proposal_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Array2<f64>,
    pub acceptance_rate: f64,
}

/// Random-walk Metropolis targeting the KDE, starting at a uniformly chosen
/// training sample. The proposal stddev in dimension j is `proposal_scale * h_j`.
pub fn sample_markov_with_stats(
    model: &KdeModel,
    n: usize,
    cfg: &ChainConfig,
) -> Result<ChainOutput> {
    cfg.validate()?;
    if n == 0 {
        return Err(FcpError::Config("chain length must be at least 1".into()));
    }
    let mut rng = rng::seeded(cfg.seed);
    let d = model.dim();
    let start = rng.random_range(0..model.samples.nrows());
    let mut current: Vec<f64> = model.samples.row(start).to_vec();
    let mut current_lp = model.log_density(&current)?;
    let step: Vec<f64> = model
        .bandwidth
        .iter()
        .map(|h| h * cfg.proposal_scale)
        .collect();
    let mut proposal = vec![0.0; d];
    let mut draws = Array2::zeros((n, d));
    let total = cfg.burn_in + n * cfg.thin;
    let mut accepted = 0usize;
    let mut kept = 0usize;
    for t in 1..=total {
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            proposal[j] = current[j] + step[j] * z;
        }
        let lp = model.log_density(&proposal)?;
        let u: f64 = rng.random();
        if u.ln() < lp - current_lp {
            current.copy_from_slice(&proposal);
            current_lp = lp;
            accepted += 1;
        }
        if t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            draws.row_mut(kept).assign(&ndarray::ArrayView1::from(&current));
            kept += 1;
        }
    }
    Ok(ChainOutput {
        draws,
        acceptance_rate: accepted as f64 / total as f64,
    })
}

pub fn sample_markov(model: &KdeModel, n: usize, cfg: &ChainConfig) -> Result<Array2<f64>> {
    Ok(sample_markov_with_stats(model, n, cfg)?.draws)
}
