use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};
use crate::rng;

pub type RecordId = u64;

/// Dense feature matrix with one label and one record key per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub rows: Array2<f64>,
    pub labels: Vec<i64>,
    pub feature_names: Vec<String>,
    pub ids: Vec<RecordId>,
}

impl DesignMatrix {
    pub fn new(
        rows: Array2<f64>,
        labels: Vec<i64>,
        feature_names: Vec<String>,
        ids: Vec<RecordId>,
    ) -> Result<Self> {
        let m = DesignMatrix {
            rows,
            labels,
            feature_names,
            ids,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.rows.dim();
        if self.labels.len() != n || self.ids.len() != n {
            return Err(FcpError::Shape(format!(
                "{n} rows but {} labels and {} ids",
                self.labels.len(),
                self.ids.len()
            )));
        }
        if self.feature_names.len() != d {
            return Err(FcpError::Shape(format!(
                "{d} columns but {} feature names",
                self.feature_names.len()
            )));
        }
        if let Some(pos) = self.rows.iter().position(|v| !v.is_finite()) {
            return Err(FcpError::Shape(format!(
                "non-finite entry at row {}, column {}",
                pos / d.max(1),
                pos % d.max(1)
            )));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<i64> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> DesignMatrix {
        DesignMatrix {
            rows: self.rows.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Same rows with labels replaced.
    pub fn relabel(&self, labels: Vec<i64>) -> Result<DesignMatrix> {
        DesignMatrix::new(
            self.rows.clone(),
            labels,
            self.feature_names.clone(),
            self.ids.clone(),
        )
    }

    /// Writes `id,label,<features...>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.rows.outer_iter().enumerate() {
            let mut rec = vec![self.ids[i].to_string(), self.labels[i].to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| FcpError::io("<feature csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, name: &str) -> Result<DesignMatrix> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| FcpError::parse(name, 1, e.to_string()))?
            .clone();
        if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
            return Err(FcpError::parse(name, 1, "expected header starting with id,label"));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let d = names.len();
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| FcpError::parse(name, 0, e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != d + 2 {
                return Err(FcpError::parse(
                    name,
                    line,
                    format!("expected {} fields, found {}", d + 2, rec.len()),
                ));
            }
            ids.push(parse_field::<u64>(&rec[0], name, line, "id")?);
            labels.push(parse_field::<i64>(&rec[1], name, line, "label")?);
            for j in 0..d {
                values.push(parse_field::<f64>(&rec[j + 2], name, line, &names[j])?);
            }
        }
        let rows = Array2::from_shape_vec((ids.len(), d), values)
            .map_err(|e| FcpError::Shape(e.to_string()))?;
        DesignMatrix::new(rows, labels, names, ids)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> FcpError {
    FcpError::io("<csv>", std::io::Error::other(e.to_string()))
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    raw: &str,
    file: &str,
    line: u64,
    what: &str,
) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| FcpError::parse(file, line, format!("invalid {what}: {raw:?}")))
}

/// Per-column affine standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardization {
    /// Population moments; constant columns get stddev 1.
    pub fn fit(rows: &Array2<f64>) -> Standardization {
        let n = rows.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(rows.ncols());
        let mut stddev = Vec::with_capacity(rows.ncols());
        for col in rows.axis_iter(Axis(1)) {
            let mu = col.sum() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(mu);
            stddev.push(if sd > 1e-12 * (1.0 + mu.abs()) { sd } else { 1.0 });
        }
        Standardization { mean, stddev }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.dim() {
            return Err(FcpError::Shape(format!(
                "standardization has {} columns, matrix has {}",
                self.dim(),
                rows.ncols()
            )));
        }
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.stddev[j];
            }
        }
        Ok(out)
    }

    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(FcpError::Shape(format!(
                "standardization has {} columns, input has {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.stddev[j])
            .collect())
    }
}

/// Fits statistics on `m` (when `stats` is `None`) and transforms it.
pub fn standardize(
    m: &DesignMatrix,
    stats: Option<&Standardization>,
) -> Result<(DesignMatrix, Standardization)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => Standardization::fit(&m.rows),
    };
    let rows = stats.apply(&m.rows)?;
    let out = DesignMatrix {
        rows,
        labels: m.labels.clone(),
        feature_names: m.feature_names.clone(),
        ids: m.ids.clone(),
    };
    Ok((out, stats))
}

/// Stratified train/validation/test partition.
///
/// Each class is shuffled with the seeded generator and cut by largest
/// remainder, so the partition is exact and depends only on `seed`.
pub fn split(
    m: &DesignMatrix,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(DesignMatrix, DesignMatrix, DesignMatrix)> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|v| !v.is_finite() || *v < 0.0) || r[0] <= 0.0 {
        return Err(FcpError::Config(format!("invalid split ratios {r:?}")));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(FcpError::Config(format!("split ratios {r:?} do not sum to 1")));
    }
    let parts_needed = r.iter().filter(|v| **v > 0.0).count();
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in m.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    for (label, idx) in &by_class {
        if idx.len() < parts_needed {
            return Err(FcpError::Stratify(format!(
                "class {label} has {} rows, fewer than {parts_needed} parts",
                idx.len()
            )));
        }
    }
    let mut rng = rng::seeded(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for idx in by_class.values() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        let counts = largest_remainder(idx.len(), &r);
        let mut start = 0;
        for (p, &c) in counts.iter().enumerate() {
            parts[p].extend_from_slice(&idx[start..start + c]);
            start += c;
        }
    }
    for p in parts.iter_mut() {
        p.shuffle(&mut rng);
    }
    Ok((m.select(&parts[0]), m.select(&parts[1]), m.select(&parts[2])))
}

/// `n` rows drawn without replacement, allocated across labels in
/// proportion to their frequency (largest remainder), in shuffled order.
pub fn stratified_sample(m: &DesignMatrix, n: usize, seed: u64) -> Result<DesignMatrix> {
    if n > m.n_rows() {
        return Err(FcpError::Stratify(format!(
            "cannot draw {n} rows from {}",
            m.n_rows()
        )));
    }
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in m.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let total = m.n_rows().max(1) as f64;
    let weights: Vec<f64> = by_class.values().map(|v| v.len() as f64 / total).collect();
    let counts = largest_remainder(n, &weights);
    let mut rng = rng::seeded(seed);
    let mut picked = Vec::with_capacity(n);
    for (idx, &c) in by_class.values().zip(&counts) {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        picked.extend_from_slice(&idx[..c.min(idx.len())]);
    }
    picked.shuffle(&mut rng);
    Ok(m.select(&picked))
}

/// Integer allocation of `n` items proportional to `weights` (which sum to 1).
pub(crate) fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    // stable: ties resolved toward the earlier part
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dm(rows: Array2<f64>, labels: Vec<i64>) -> DesignMatrix {
        let d = rows.ncols();
        let n = rows.nrows();
        DesignMatrix::new(
            rows,
            labels,
            (0..d).map(|j| format!("f{j}")).collect(),
            (0..n as u64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_column_floors_stddev() {
        let m = dm(array![[3.0, 0.0], [3.0, 2.0]], vec![0, 1]);
        let (out, stats) = standardize(&m, None).unwrap();
        assert_eq!(stats.stddev[0], 1.0);
        assert_eq!(out.rows.column(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(stats.mean[1], 1.0);
        assert_eq!(stats.stddev[1], 1.0);
        assert_eq!(out.rows.column(1).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let m = dm(array![[1.0, 2.0]], vec![0]);
        let stats = Standardization {
            mean: vec![0.0],
            stddev: vec![1.0],
        };
        assert!(matches!(standardize(&m, Some(&stats)), Err(FcpError::Shape(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let r = DesignMatrix::new(
            array![[f64::NAN]],
            vec![0],
            vec!["a".into()],
            vec![1],
        );
        assert!(r.is_err());
    }

    #[test]
    fn split_all_train_is_permutation() {
        let rows = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let m = dm(rows, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let (tr, va, te) = split(&m, (1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(va.n_rows(), 0);
        assert_eq!(te.n_rows(), 0);
        let mut ids = tr.ids.clone();
        ids.sort();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_balanced_and_exact() {
        let rows = Array2::from_shape_fn((100, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..100).map(|i| (i % 2) as i64).collect();
        let m = dm(rows, labels);
        let (tr, va, te) = split(&m, (0.7, 0.15, 0.15), 1).unwrap();
        assert_eq!(tr.n_rows() + va.n_rows() + te.n_rows(), 100);
        for part in [&tr, &va, &te] {
            let ones = part.labels.iter().filter(|&&l| l == 1).count() as f64;
            let frac = ones / part.n_rows() as f64;
            assert!((frac - 0.5).abs() <= 0.5 / part.n_rows() as f64 + 0.01, "{frac}");
        }
        let mut all: Vec<u64> = tr.ids.iter().chain(&va.ids).chain(&te.ids).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_too_small_class() {
        let m = dm(array![[0.0], [1.0], [2.0], [3.0]], vec![0, 0, 0, 1]);
        assert!(matches!(
            split(&m, (0.5, 0.25, 0.25), 1),
            Err(FcpError::Stratify(_))
        ));
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(10, &[0.7, 0.15, 0.15]), vec![7, 2, 1]);
        assert_eq!(largest_remainder(3, &[1.0, 0.0, 0.0]), vec![3, 0, 0]);
    }

    #[test]
    fn feature_csv_round_trip() {
        let m = dm(array![[0.1, -2.5], [1e-300, 7.0]], vec![1, 2]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = DesignMatrix::read_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, m);
    }
}
