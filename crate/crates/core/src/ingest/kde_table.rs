//! Mobile-network KDE telemetry records (docket, eight measurements, severity, class).

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::design::{csv_err, parse_field, DesignMatrix, RecordId};
use crate::error::{FcpError, Result};

pub const KDE_FEATURES: [&str; 8] = [
    "ci_ratio",
    "power_margin_dbm",
    "poi_cong_pct",
    "cssr_pct",
    "tch_cong_pct",
    "sdcch_cong_pct",
    "signal_strength_dbm",
    "packet_loss_pct",
];

/// Columns holding percentages; clamped to [0, 120].
pub const PERCENT_COLUMNS: [usize; 5] = [2, 3, 4, 5, 7];
pub const PERCENT_MAX: f64 = 120.0;

/// Severity scale of KDE records: 0 none, 1 warning, 2 major, 3 critical.
pub const MAX_SEVERITY: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeRecord {
    pub docket: RecordId,
    pub features: Vec<f64>,
    pub severity: u8,
    pub class: Option<u32>,
}

impl KdeRecord {
    pub fn new(docket: RecordId, mut features: Vec<f64>, severity: u8, class: Option<u32>) -> Self {
        clamp_percentages(&mut features);
        KdeRecord {
            docket,
            features,
            severity,
            class,
        }
    }
}

pub fn clamp_percentages(features: &mut [f64]) {
    for &j in &PERCENT_COLUMNS {
        if let Some(v) = features.get_mut(j) {
            *v = v.clamp(0.0, PERCENT_MAX);
        }
    }
}

fn header(with_class: bool) -> Vec<&'static str> {
    let mut h = vec!["docket"];
    h.extend(KDE_FEATURES);
    h.push("severity");
    if with_class {
        h.push("class");
    }
    h
}

pub fn read_kde_table<R: Read>(input: R, name: &str) -> Result<Vec<KdeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| FcpError::parse(name, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let with_class = if found == header(false) {
        false
    } else if found == header(true) {
        true
    } else {
        return Err(FcpError::parse(
            name,
            1,
            format!("unexpected header {:?}", found.join(",")),
        ));
    };
    let width = header(with_class).len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| FcpError::parse(name, 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(FcpError::parse(
                name,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let docket = parse_field(&rec[0], name, line, "docket")?;
        let mut features = Vec::with_capacity(KDE_FEATURES.len());
        for (j, col) in KDE_FEATURES.iter().enumerate() {
            let v: f64 = parse_field(&rec[j + 1], name, line, col)?;
            if !v.is_finite() {
                return Err(FcpError::parse(name, line, format!("non-finite {col}")));
            }
            features.push(v);
        }
        let severity: u8 = parse_field(&rec[9], name, line, "severity")?;
        if severity > MAX_SEVERITY {
            return Err(FcpError::parse(
                name,
                line,
                format!("severity {severity} outside 0..{MAX_SEVERITY}"),
            ));
        }
        let class = if with_class && !rec[10].trim().is_empty() {
            Some(parse_field(&rec[10], name, line, "class")?)
        } else {
            None
        };
        out.push(KdeRecord::new(docket, features, severity, class));
    }
    Ok(out)
}

pub fn load_kde_table(path: &std::path::Path) -> Result<Vec<KdeRecord>> {
    if !path.is_file() {
        return Err(FcpError::FileMissing(path.to_path_buf()));
    }
    let f = std::fs::File::open(path).map_err(|e| FcpError::io(path, e))?;
    read_kde_table(f, &path.display().to_string())
}

/// Writes records; the class column is emitted when `with_class` is set.
pub fn write_kde_table<W: Write>(out: W, records: &[KdeRecord], with_class: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(with_class)).map_err(csv_err)?;
    for r in records {
        let mut rec = vec![r.docket.to_string()];
        rec.extend(r.features.iter().map(|v| v.to_string()));
        rec.push(r.severity.to_string());
        if with_class {
            rec.push(r.class.map(|c| c.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| FcpError::io("<kde csv>", e))?;
    Ok(())
}

/// Feature matrix over KDE records with labels chosen by `label`.
pub fn kde_design_matrix(
    records: &[KdeRecord],
    label: impl Fn(&KdeRecord) -> i64,
) -> Result<DesignMatrix> {
    let mut values = Vec::with_capacity(records.len() * KDE_FEATURES.len());
    for r in records {
        if r.features.len() != KDE_FEATURES.len() {
            return Err(FcpError::Shape(format!(
                "docket {} has {} features",
                r.docket,
                r.features.len()
            )));
        }
        values.extend_from_slice(&r.features);
    }
    let rows = Array2::from_shape_vec((records.len(), KDE_FEATURES.len()), values)
        .map_err(|e| FcpError::Shape(e.to_string()))?;
    DesignMatrix::new(
        rows,
        records.iter().map(label).collect(),
        KDE_FEATURES.iter().map(|s| s.to_string()).collect(),
        records.iter().map(|r| r.docket).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXTRACT: &str = "docket,ci_ratio,power_margin_dbm,poi_cong_pct,cssr_pct,tch_cong_pct,sdcch_cong_pct,signal_strength_dbm,packet_loss_pct,severity
23,49,22,6,99,0,0,96,0,2
52,10,13,8,83,10,0,109,2,1
68,28,20,1,96,1,1,100,1,0
69,-10,-15,11,91,6,0,98,0,1
134,67,25,14,85,3,4,80,2,1
201,49,15,1,98,2,0,95,2,0
215,49,75,6,99,5,0,75,0,3
";

    #[test]
    fn reads_extract() {
        let recs = read_kde_table(EXTRACT.as_bytes(), "extract").unwrap();
        assert_eq!(recs.len(), 7);
        let d68 = recs.iter().find(|r| r.docket == 68).unwrap();
        assert_eq!(d68.features, vec![28.0, 20.0, 1.0, 96.0, 1.0, 1.0, 100.0, 1.0]);
        assert_eq!(d68.severity, 0);
        let d52 = recs.iter().find(|r| r.docket == 52).unwrap();
        assert_eq!(d52.severity, 1);
        assert_eq!(d52.features[6], 109.0);
        let d69 = recs.iter().find(|r| r.docket == 69).unwrap();
        assert_eq!(d69.features[0], -10.0);
        assert_eq!(d69.features[1], -15.0);
        assert!(recs.iter().all(|r| r.class.is_none()));
    }

    #[test]
    fn severity_out_of_range() {
        let bad = EXTRACT.replace("215,49,75,6,99,5,0,75,0,3", "215,49,75,6,99,5,0,75,0,4");
        assert!(matches!(
            read_kde_table(bad.as_bytes(), "bad"),
            Err(FcpError::Parse { line: 8, .. })
        ));
    }

    #[test]
    fn percentages_clamped_others_not() {
        let text = "docket,ci_ratio,power_margin_dbm,poi_cong_pct,cssr_pct,tch_cong_pct,sdcch_cong_pct,signal_strength_dbm,packet_loss_pct,severity,class\n1,-30,-40,150,-5,3,4,130,121,2,3\n";
        let recs = read_kde_table(text.as_bytes(), "t").unwrap();
        assert_eq!(recs[0].features, vec![-30.0, -40.0, 120.0, 0.0, 3.0, 4.0, 130.0, 120.0]);
        assert_eq!(recs[0].class, Some(3));
    }

    #[test]
    fn write_read_round_trip() {
        let recs = read_kde_table(EXTRACT.as_bytes(), "extract").unwrap();
        let mut buf = Vec::new();
        write_kde_table(&mut buf, &recs, true).unwrap();
        assert_eq!(read_kde_table(buf.as_slice(), "buf").unwrap(), recs);
    }
}
