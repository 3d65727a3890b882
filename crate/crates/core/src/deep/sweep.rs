use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::stack::{train_stack, StackConfig};
use crate::error::{FcpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeCell {
    pub h1: usize,
    pub h2: usize,
    pub accuracy: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityCell {
    pub beta: f64,
    pub rho: f64,
    pub accuracy: f64,
    pub mse: f64,
}

/// Data for one sweep: the stack is trained on `train` and scored on `val`.
pub struct SweepData<'a> {
    pub train_x: &'a Array2<f64>,
    pub train_y: &'a [i64],
    pub val_x: &'a Array2<f64>,
    pub val_y: &'a [i64],
}

/// Validation accuracy and first-autoencoder reconstruction MSE on the
/// validation inputs.
fn score(data: &SweepData, cfg: &StackConfig) -> Result<(f64, f64)> {
    if data.val_x.nrows() == 0 {
        return Err(FcpError::Shape("validation set is empty".into()));
    }
    let (model, report) = train_stack(data.train_x, data.train_y, cfg)?;
    let pred = model.predict_batch(data.val_x)?;
    let hits = pred.iter().zip(data.val_y).filter(|(p, t)| p == t).count();
    let xs = model.scaling.apply(data.val_x)?;
    let mse = report.pretrained[0].reconstruction_mse(&xs)?;
    Ok((hits as f64 / pred.len() as f64, mse))
}

/// Every (H1, H2) pair with the same base configuration and seed.
pub fn sweep_hidden_sizes(
    data: &SweepData,
    h1: &[usize],
    h2: &[usize],
    base: &StackConfig,
) -> Result<Vec<SizeCell>> {
    if h1.is_empty() || h2.is_empty() {
        return Err(FcpError::Config("sweep ranges must be nonempty".into()));
    }
    let mut out = Vec::new();
    for &a in h1 {
        for &b in h2 {
            let cfg = base.clone().with_sizes(vec![a, b]);
            let (accuracy, mse) = score(data, &cfg)?;
            log::info!("sweep h1={a} h2={b}: accuracy {accuracy:.4}, mse {mse:.6}");
            out.push(SizeCell { h1: a, h2: b, accuracy, mse });
        }
    }
    Ok(out)
}

/// Every (β, ρ) pair, applied to all layers.
pub fn sweep_sparsity(
    data: &SweepData,
    betas: &[f64],
    rhos: &[f64],
    base: &StackConfig,
) -> Result<Vec<SparsityCell>> {
    if betas.is_empty() || rhos.is_empty() {
        return Err(FcpError::Config("sweep ranges must be nonempty".into()));
    }
    let mut out = Vec::new();
    for &beta in betas {
        for &rho in rhos {
            let cfg = base.clone().with_sparsity(beta, rho);
            let (accuracy, mse) = score(data, &cfg)?;
            log::info!("sweep beta={beta} rho={rho}: accuracy {accuracy:.4}, mse {mse:.6}");
            out.push(SparsityCell { beta, rho, accuracy, mse });
        }
    }
    Ok(out)
}

pub fn write_size_csv<W: Write>(out: W, cells: &[SizeCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h1", "h2", "accuracy", "mse"])
        .map_err(crate::ingest::csv_err)?;
    for c in cells {
        w.write_record([
            c.h1.to_string(),
            c.h2.to_string(),
            c.accuracy.to_string(),
            c.mse.to_string(),
        ])
        .map_err(crate::ingest::csv_err)?;
    }
    w.flush().map_err(|e| FcpError::io("<sweep csv>", e))
}

pub fn write_sparsity_csv<W: Write>(out: W, cells: &[SparsityCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta", "rho", "accuracy", "mse"])
        .map_err(crate::ingest::csv_err)?;
    for c in cells {
        w.write_record([
            c.beta.to_string(),
            c.rho.to_string(),
            c.accuracy.to_string(),
            c.mse.to_string(),
        ])
        .map_err(crate::ingest::csv_err)?;
    }
    w.flush().map_err(|e| FcpError::io("<sweep csv>", e))
}
