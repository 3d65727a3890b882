//! Telstra-style relational fault tables and their feature assembly.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::design::{parse_field, DesignMatrix, RecordId};
use crate::error::{FcpError, Result};

pub const TRAIN_FILE: &str = "train.csv";
pub const EVENT_FILE: &str = "event_type.csv";
pub const LOG_FEATURE_FILE: &str = "log_feature.csv";
pub const RESOURCE_FILE: &str = "resource_type.csv";
pub const SEVERITY_TYPE_FILE: &str = "severity_type.csv";

pub const LOCATION_INDEX: &str = "location_index";
pub const LOCATION_FREQUENCY: &str = "location_frequency";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainRow {
    pub id: RecordId,
    pub location: String,
    pub fault_severity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRow {
    pub id: RecordId,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFeatureRow {
    pub id: RecordId,
    pub token: String,
    pub volume: u64,
}

/// The five id-keyed tables, rows kept verbatim in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawFaultTables {
    pub train: Vec<TrainRow>,
    pub event_type: Vec<TokenRow>,
    pub log_feature: Vec<LogFeatureRow>,
    pub resource_type: Vec<TokenRow>,
    pub severity_type: Vec<TokenRow>,
}

impl RawFaultTables {
    pub fn row_counts(&self) -> [(&'static str, usize); 5] {
        [
            (TRAIN_FILE, self.train.len()),
            (EVENT_FILE, self.event_type.len()),
            (LOG_FEATURE_FILE, self.log_feature.len()),
            (RESOURCE_FILE, self.resource_type.len()),
            (SEVERITY_TYPE_FILE, self.severity_type.len()),
        ]
    }
}

fn read_table<R: Read>(
    input: R,
    name: &str,
    header: &[&str],
    mut on_row: impl FnMut(&csv::StringRecord, u64) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let found = rdr
        .headers()
        .map_err(|e| FcpError::parse(name, 1, e.to_string()))?;
    if found.iter().collect::<Vec<_>>() != header {
        return Err(FcpError::parse(
            name,
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| FcpError::parse(name, 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(FcpError::parse(
                name,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        on_row(&rec, line)?;
    }
    Ok(())
}

fn open(dir: &Path, file: &str) -> Result<File> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(FcpError::FileMissing(path));
    }
    File::open(&path).map_err(|e| FcpError::io(path, e))
}

pub fn parse_train<R: Read>(input: R) -> Result<Vec<TrainRow>> {
    let mut rows = Vec::new();
    read_table(input, TRAIN_FILE, &["id", "location", "fault_severity"], |r, line| {
        let fault_severity: u8 = parse_field(&r[2], TRAIN_FILE, line, "fault_severity")?;
        if fault_severity > 2 {
            return Err(FcpError::parse(
                TRAIN_FILE,
                line,
                format!("fault_severity {fault_severity} outside 0..2"),
            ));
        }
        rows.push(TrainRow {
            id: parse_field(&r[0], TRAIN_FILE, line, "id")?,
            location: r[1].to_string(),
            fault_severity,
        });
        Ok(())
    })?;
    Ok(rows)
}

pub fn parse_tokens<R: Read>(input: R, name: &str, column: &str) -> Result<Vec<TokenRow>> {
    let mut rows = Vec::new();
    read_table(input, name, &["id", column], |r, line| {
        rows.push(TokenRow {
            id: parse_field(&r[0], name, line, "id")?,
            token: r[1].to_string(),
        });
        Ok(())
    })?;
    Ok(rows)
}

pub fn parse_log_features<R: Read>(input: R) -> Result<Vec<LogFeatureRow>> {
    let mut rows = Vec::new();
    read_table(
        input,
        LOG_FEATURE_FILE,
        &["id", "log_feature", "volume"],
        |r, line| {
            rows.push(LogFeatureRow {
                id: parse_field(&r[0], LOG_FEATURE_FILE, line, "id")?,
                token: r[1].to_string(),
                volume: parse_field(&r[2], LOG_FEATURE_FILE, line, "volume")?,
            });
            Ok(())
        },
    )?;
    Ok(rows)
}

/// Loads the five Telstra-layout CSV files from `dir`.
pub fn load_telstra(dir: &Path) -> Result<RawFaultTables> {
    let tables = RawFaultTables {
        train: parse_train(open(dir, TRAIN_FILE)?)?,
        event_type: parse_tokens(open(dir, EVENT_FILE)?, EVENT_FILE, "event_type")?,
        log_feature: parse_log_features(open(dir, LOG_FEATURE_FILE)?)?,
        resource_type: parse_tokens(open(dir, RESOURCE_FILE)?, RESOURCE_FILE, "resource_type")?,
        severity_type: parse_tokens(
            open(dir, SEVERITY_TYPE_FILE)?,
            SEVERITY_TYPE_FILE,
            "severity_type",
        )?,
    };
    for (file, n) in tables.row_counts() {
        log::info!("{file}: {n} rows");
    }
    Ok(tables)
}

/// Sort key giving "feature 2" < "feature 10".
fn natural_key(token: &str) -> (String, u64, String) {
    let digits: String = token
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let prefix = token[..token.len() - digits.len()].to_string();
    let num = digits.parse().unwrap_or(0);
    (prefix, num, token.to_string())
}

fn vocabulary<'a>(tokens: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = tokens.map(str::to_string).collect();
    v.sort_by_key(|t| natural_key(t));
    v.dedup();
    v
}

/// Trailing integer of a location token ("location 120" -> 120).
pub fn location_index(token: &str) -> Option<f64> {
    let (_, num, _) = natural_key(token.trim());
    if token.trim().ends_with(|c: char| c.is_ascii_digit()) {
        Some(num as f64)
    } else {
        None
    }
}

/// Column layout learned from training tables. Applying it to other tables
/// never adds columns; unseen tokens contribute nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub log_features: Vec<String>,
    pub event_types: Vec<String>,
    pub resource_types: Vec<String>,
    pub severity_types: Vec<String>,
    /// Training rows per location token.
    pub location_counts: BTreeMap<String, u64>,
    /// Fraction of training rows at each location with fault_severity > 0.
    pub location_fault_rate: BTreeMap<String, f64>,
}

impl FeatureSchema {
    pub fn fit(tables: &RawFaultTables) -> FeatureSchema {
        let mut location_counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut faults: BTreeMap<String, u64> = BTreeMap::new();
        for r in &tables.train {
            *location_counts.entry(r.location.clone()).or_default() += 1;
            *faults.entry(r.location.clone()).or_default() += u64::from(r.fault_severity > 0);
        }
        let location_fault_rate = location_counts
            .iter()
            .map(|(k, &n)| (k.clone(), faults[k] as f64 / n as f64))
            .collect();
        FeatureSchema {
            log_features: vocabulary(tables.log_feature.iter().map(|r| r.token.as_str())),
            event_types: vocabulary(tables.event_type.iter().map(|r| r.token.as_str())),
            resource_types: vocabulary(tables.resource_type.iter().map(|r| r.token.as_str())),
            severity_types: vocabulary(tables.severity_type.iter().map(|r| r.token.as_str())),
            location_counts,
            location_fault_rate,
        }
    }

    pub fn dim(&self) -> usize {
        self.log_features.len()
            + self.event_types.len()
            + self.resource_types.len()
            + self.severity_types.len()
            + 2
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        names.extend(self.log_features.iter().cloned());
        names.extend(self.event_types.iter().cloned());
        names.extend(self.resource_types.iter().cloned());
        names.extend(self.severity_types.iter().cloned());
        names.push(LOCATION_INDEX.to_string());
        names.push(LOCATION_FREQUENCY.to_string());
        names
    }

    /// Column index of the location index feature.
    pub fn location_column(&self) -> usize {
        self.dim() - 2
    }

    /// Historical fault rate for a parsed location index, if the location was seen.
    pub fn fault_rate_for_index(&self, index: f64) -> Option<f64> {
        self.location_fault_rate
            .iter()
            .find(|(k, _)| location_index(k) == Some(index))
            .map(|(_, &v)| v)
    }

    /// One row per train id, in train-file order.
    pub fn assemble(&self, tables: &RawFaultTables) -> Result<DesignMatrix> {
        let d = self.dim();
        let n = tables.train.len();
        let mut row_of: HashMap<RecordId, usize> = HashMap::with_capacity(n);
        for (i, r) in tables.train.iter().enumerate() {
            if row_of.insert(r.id, i).is_some() {
                return Err(FcpError::parse(
                    TRAIN_FILE,
                    i as u64 + 2,
                    format!("duplicate id {}", r.id),
                ));
            }
        }
        let index = |vocab: &[String], offset: usize| -> HashMap<String, usize> {
            vocab
                .iter()
                .enumerate()
                .map(|(j, t)| (t.clone(), offset + j))
                .collect()
        };
        let mut offset = 0;
        let log_idx = index(&self.log_features, offset);
        offset += self.log_features.len();
        let event_idx = index(&self.event_types, offset);
        offset += self.event_types.len();
        let res_idx = index(&self.resource_types, offset);
        offset += self.resource_types.len();
        let sev_idx = index(&self.severity_types, offset);

        let mut rows = Array2::<f64>::zeros((n, d));
        let mut touched = vec![false; n];
        for r in &tables.log_feature {
            if let (Some(&i), Some(&j)) = (row_of.get(&r.id), log_idx.get(&r.token)) {
                rows[[i, j]] += r.volume as f64;
                touched[i] = true;
            }
        }
        for (table, idx) in [
            (&tables.event_type, &event_idx),
            (&tables.resource_type, &res_idx),
            (&tables.severity_type, &sev_idx),
        ] {
            for r in table {
                if let Some(&i) = row_of.get(&r.id) {
                    touched[i] = true;
                    if let Some(&j) = idx.get(&r.token) {
                        rows[[i, j]] += 1.0;
                    }
                }
            }
        }
        for (i, r) in tables.train.iter().enumerate() {
            if !touched[i] {
                log::warn!("id {} has no auxiliary rows; using zero features", r.id);
            }
            rows[[i, d - 2]] = location_index(&r.location).unwrap_or_else(|| {
                log::warn!("location {:?} has no numeric index", r.location);
                0.0
            });
            rows[[i, d - 1]] = self.location_counts.get(&r.location).copied().unwrap_or(0) as f64;
        }
        DesignMatrix::new(
            rows,
            tables.train.iter().map(|r| i64::from(r.fault_severity)).collect(),
            self.feature_names(),
            tables.train.iter().map(|r| r.id).collect(),
        )
    }
}

/// Feature matrix with a vocabulary fitted on the same tables.
pub fn assemble_features(tables: &RawFaultTables) -> Result<(DesignMatrix, FeatureSchema)> {
    let schema = FeatureSchema::fit(tables);
    let m = schema.assemble(tables)?;
    Ok((m, schema))
}
