//! Loading design matrices for a task from either file format the CLI reads.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use fcp_core::error::{FcpError, Result};
use fcp_core::ingest::{kde_design_matrix, read_kde_table, DesignMatrix, KdeRecord};
use fcp_core::pipeline::{build_training_sets, StageMapping};
use fcp_core::synthgen::ClassTaxonomy;

use crate::Task;

/// The taxonomy shipped with the repository, used when no `--taxonomy` is given.
pub const DEFAULT_TAXONOMY: &str = include_str!("../../../data/mobile_taxonomy.json");

pub fn taxonomy(path: Option<&Path>) -> Result<ClassTaxonomy> {
    match path {
        Some(p) => ClassTaxonomy::load(p),
        None => ClassTaxonomy::from_json(DEFAULT_TAXONOMY),
    }
}

pub enum Table {
    Kde(Vec<KdeRecord>),
    Features(DesignMatrix),
}

/// KDE tables start with a `docket` column, feature CSVs with `id,label`.
pub fn read_table(path: &Path) -> Result<Table> {
    let open = || File::open(path).map_err(|e| FcpError::io(path, e));
    if !path.is_file() {
        return Err(FcpError::FileMissing(path.to_path_buf()));
    }
    let mut first = String::new();
    BufReader::new(open()?)
        .read_line(&mut first)
        .map_err(|e| FcpError::io(path, e))?;
    let name = path.display().to_string();
    if first.trim_start_matches('\u{feff}').starts_with("docket") {
        Ok(Table::Kde(read_kde_table(BufReader::new(open()?), &name)?))
    } else {
        Ok(Table::Features(DesignMatrix::read_csv(BufReader::new(open()?), &name)?))
    }
}

/// Every record with its own id, for pipeline runs; labels are severities
/// for KDE tables.
pub fn records(path: &Path) -> Result<DesignMatrix> {
    match read_table(path)? {
        Table::Kde(r) => kde_design_matrix(&r, |r| i64::from(r.severity)),
        Table::Features(m) => Ok(m),
    }
}

/// Training data for `task`. Feature CSVs already carry the target in their
/// label column; KDE tables are split per the stage mapping.
pub fn task_matrix(
    path: &Path,
    task: Task,
    taxonomy: &ClassTaxonomy,
    category: Option<&str>,
) -> Result<DesignMatrix> {
    let records = match read_table(path)? {
        Table::Features(m) => return Ok(m),
        Table::Kde(r) => r,
    };
    if task == Task::Localize && records.iter().all(|r| r.class.is_none()) {
        return Err(FcpError::Label(format!(
            "{} has no class column; localization needs fault classes (synth --with-class)",
            path.display()
        )));
    }
    let mut sets = build_training_sets(&records, taxonomy, &StageMapping::default())?;
    Ok(match (task, category) {
        (Task::Detect1, _) => sets.stage1,
        (Task::Detect2, _) => sets.stage2,
        (Task::Severity, _) => sets.severity,
        (Task::Localize, None) => sets.layer1,
        (Task::Localize, Some(c)) => sets.layer2.remove(c).ok_or_else(|| {
            FcpError::Config(format!(
                "unknown category {c:?}; taxonomy has {:?}",
                taxonomy.layer1_categories()
            ))
        })?,
    })
}
