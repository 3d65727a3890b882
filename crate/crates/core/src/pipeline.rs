//! Two-stage detection followed by localization or severity forecasting.
//!
//! Stage 1 separates fault from no-fault records. Fault records go to stage
//! 2, which separates manifest from impending faults. Manifest faults are
//! localized (broad category, then fine class); impending faults get a
//! severity forecast and, when a Telstra feature schema is configured, a
//! location hint.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FcpError, Result};
use crate::ingest::{DesignMatrix, FeatureSchema, KdeRecord, RecordId};
use crate::model::TrainedModel;
use crate::persist::load_model;
use crate::shallow::forest::argmax_lowest;
use crate::synthgen::ClassTaxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1 {
    NoFault,
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2 {
    Manifest,
    Impending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Minor,
    Major,
    Critical,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Warning => "warning",
            Severity::Minor => "minor",
            Severity::Major => "major",
            Severity::Critical => "critical",
        }
    }
}

/// Stage labels used when building training sets: stage-1 models learn
/// 0 = no fault / 1 = fault, stage-2 models 0 = impending / 1 = manifest.
pub const NO_FAULT: i64 = 0;
pub const FAULT: i64 = 1;
pub const IMPENDING: i64 = 0;
pub const MANIFEST: i64 = 1;

/// Which record severities count as no fault, impending or manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMapping {
    pub none: Vec<u8>,
    pub impending: Vec<u8>,
    pub manifest: Vec<u8>,
}

impl Default for StageMapping {
    fn default() -> Self {
        StageMapping {
            none: vec![0],
            impending: vec![1],
            manifest: vec![2, 3],
        }
    }
}

impl StageMapping {
    pub fn validate(&self) -> Result<()> {
        let mut all: Vec<u8> = self
            .none
            .iter()
            .chain(&self.impending)
            .chain(&self.manifest)
            .copied()
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != n {
            return Err(FcpError::Config("a severity appears in more than one stage".into()));
        }
        Ok(())
    }

    pub fn stage1_label(&self, severity: u8) -> Option<i64> {
        if self.none.contains(&severity) {
            Some(NO_FAULT)
        } else if self.impending.contains(&severity) || self.manifest.contains(&severity) {
            Some(FAULT)
        } else {
            None
        }
    }

    pub fn stage2_label(&self, severity: u8) -> Option<i64> {
        if self.impending.contains(&severity) {
            Some(IMPENDING)
        } else if self.manifest.contains(&severity) {
            Some(MANIFEST)
        } else {
            None
        }
    }
}

/// Training sets for every pipeline model, built from labeled KDE records.
pub struct TrainingSets {
    pub stage1: DesignMatrix,
    pub stage2: DesignMatrix,
    /// Labels are indices into `ClassTaxonomy::layer1_categories`.
    pub layer1: DesignMatrix,
    /// Per category, labels are class ids.
    pub layer2: BTreeMap<String, DesignMatrix>,
    /// Fault records labeled with their severity.
    pub severity: DesignMatrix,
}

fn subset(records: &[KdeRecord], keep: impl Fn(&KdeRecord) -> Option<i64>) -> Result<DesignMatrix> {
    let picked: Vec<(KdeRecord, i64)> = records
        .iter()
        .filter_map(|r| keep(r).map(|l| (r.clone(), l)))
        .collect();
    let recs: Vec<KdeRecord> = picked.iter().map(|(r, _)| r.clone()).collect();
    let dm = crate::ingest::kde_design_matrix(&recs, |_| 0)?;
    dm.relabel(picked.iter().map(|(_, l)| *l).collect())
}

pub fn build_training_sets(
    records: &[KdeRecord],
    taxonomy: &ClassTaxonomy,
    mapping: &StageMapping,
) -> Result<TrainingSets> {
    mapping.validate()?;
    let categories = taxonomy.layer1_categories();
    let layer1_of = taxonomy.layer1_of();
    let category_of = |r: &KdeRecord| -> Option<usize> {
        let c = r.class?;
        let name = layer1_of.get(&c)?;
        categories.iter().position(|x| x == name)
    };
    let manifest_class = |r: &KdeRecord| r.class.is_some() && mapping.manifest.contains(&r.severity);
    let mut layer2 = BTreeMap::new();
    for (ci, cat) in categories.iter().enumerate() {
        let m = subset(records, |r| {
            (manifest_class(r) && category_of(r) == Some(ci)).then(|| i64::from(r.class.unwrap_or(0)))
        })?;
        layer2.insert(cat.clone(), m);
    }
    Ok(TrainingSets {
        stage1: subset(records, |r| mapping.stage1_label(r.severity))?,
        stage2: subset(records, |r| mapping.stage2_label(r.severity))?,
        layer1: subset(records, |r| {
            if manifest_class(r) {
                category_of(r).map(|c| c as i64)
            } else {
                None
            }
        })?,
        layer2,
        severity: subset(records, |r| {
            (mapping.stage1_label(r.severity) == Some(FAULT)).then_some(i64::from(r.severity))
        })?,
    })
}

/// Output of one model on one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub label: i64,
    pub probabilities: Vec<f64>,
}

/// Anything the pipeline can route on: trained models or test stubs.
pub trait Scorer: Send + Sync {
    fn labels(&self) -> Vec<i64>;
    fn n_features(&self) -> Option<usize>;
    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn decide(&self, x: &[f64]) -> Result<Decision> {
        let p = self.probabilities(x)?;
        let labels = self.labels();
        if p.len() != labels.len() {
            return Err(FcpError::Shape(format!(
                "{} probabilities for {} labels",
                p.len(),
                labels.len()
            )));
        }
        Ok(Decision {
            label: labels[argmax_lowest(&p)],
            probabilities: p,
        })
    }
}

impl Scorer for TrainedModel {
    fn labels(&self) -> Vec<i64> {
        self.label_vocabulary.clone()
    }

    fn n_features(&self) -> Option<usize> {
        Some(TrainedModel::n_features(self))
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_proba(x)
    }
}

/// Fixed-output model.
#[derive(Debug, Clone, PartialEq)]
pub struct StubModel {
    pub labels: Vec<i64>,
    pub output: Vec<f64>,
}

impl StubModel {
    /// Always certain of `label`.
    pub fn always(labels: &[i64], label: i64) -> StubModel {
        StubModel {
            labels: labels.to_vec(),
            output: labels.iter().map(|&l| if l == label { 1.0 } else { 0.0 }).collect(),
        }
    }
}

impl Scorer for StubModel {
    fn labels(&self) -> Vec<i64> {
        self.labels.clone()
    }

    fn n_features(&self) -> Option<usize> {
        None
    }

    fn probabilities(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.output.clone())
    }
}

/// Model that always fails; exercises the error path.
#[derive(Debug, Clone, Default)]
pub struct FailingModel;

impl Scorer for FailingModel {
    fn labels(&self) -> Vec<i64> {
        vec![0, 1]
    }

    fn n_features(&self) -> Option<usize> {
        None
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Err(FcpError::Shape(format!("stub failure on {} features", x.len())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationHint {
    pub location_index: f64,
    /// Share of training records at this location that had faults.
    pub historical_fault_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictError {
    pub stage: String,
    pub message: String,
}

/// Outcome for one record. Absent on error paths: every field from the
/// failing stage onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcpVerdict {
    pub id: RecordId,
    pub stage1: Option<Stage1>,
    pub stage2: Option<Stage2>,
    pub layer1_category: Option<String>,
    pub layer2_class: Option<String>,
    /// Set when the category has several classes but no fine-grain model.
    pub layer2_unavailable: bool,
    pub predicted_severity: Option<Severity>,
    pub location_hint: Option<LocationHint>,
    /// Probability of the chosen label at each decision taken.
    pub confidences: BTreeMap<String, f64>,
    pub error: Option<VerdictError>,
}

impl FcpVerdict {
    fn new(id: RecordId) -> Self {
        FcpVerdict {
            id,
            stage1: None,
            stage2: None,
            layer1_category: None,
            layer2_class: None,
            layer2_unavailable: false,
            predicted_severity: None,
            location_hint: None,
            confidences: BTreeMap::new(),
            error: None,
        }
    }

    /// Field-presence rules. Complete verdicts follow the routing exactly;
    /// verdicts with an error carry a consistent prefix of it.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let fault = self.stage1 == Some(Stage1::Fault);
        let manifest = self.stage2 == Some(Stage2::Manifest);
        let impending = self.stage2 == Some(Stage2::Impending);
        let only_if = |present: bool, cond: bool, what: &str| {
            if present && !cond {
                Err(format!("record {}: {what}", self.id))
            } else {
                Ok(())
            }
        };
        only_if(self.stage2.is_some(), fault, "stage2 without a fault")?;
        only_if(self.layer1_category.is_some(), manifest, "layer1 without manifest")?;
        only_if(self.layer2_class.is_some(), self.layer1_category.is_some(), "layer2 without layer1")?;
        only_if(self.layer2_unavailable, self.layer1_category.is_some() && self.layer2_class.is_none(), "layer2 flag inconsistent")?;
        only_if(self.predicted_severity.is_some(), impending, "severity without impending")?;
        only_if(self.location_hint.is_some(), self.predicted_severity.is_some(), "location hint without severity")?;
        if self.error.is_none() {
            let complete = match (self.stage1, self.stage2) {
                (Some(Stage1::NoFault), None) => true,
                (Some(Stage1::Fault), Some(Stage2::Manifest)) => {
                    self.layer1_category.is_some()
                        && (self.layer2_class.is_some() || self.layer2_unavailable)
                }
                (Some(Stage1::Fault), Some(Stage2::Impending)) => self.predicted_severity.is_some(),
                _ => false,
            };
            if !complete {
                return Err(format!("record {}: incomplete verdict without error", self.id));
            }
        }
        Ok(())
    }

    pub fn route(&self) -> &'static str {
        if self.error.is_some() {
            return "error";
        }
        match (self.stage1, self.stage2) {
            (Some(Stage1::NoFault), _) => "no_fault",
            (_, Some(Stage2::Manifest)) => "manifest",
            (_, Some(Stage2::Impending)) => "impending",
            _ => "error",
        }
    }
}

/// Category and class names the localizer reports.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationNames {
    pub categories: Vec<String>,
    pub class_names: BTreeMap<i64, String>,
    /// Class ids per category, in id order.
    pub classes_of: BTreeMap<String, Vec<i64>>,
}

impl LocalizationNames {
    /// Only classes whose severity is manifest can be localized, so only
    /// those count as members of a category.
    pub fn from_taxonomy(t: &ClassTaxonomy, mapping: &StageMapping) -> Self {
        let categories = t.layer1_categories();
        let mut classes_of: BTreeMap<String, Vec<i64>> = BTreeMap::new();
        for c in &t.classes {
            if !mapping.manifest.contains(&c.severity) {
                continue;
            }
            if let Some(l) = &c.layer1 {
                classes_of.entry(l.clone()).or_default().push(i64::from(c.id));
            }
        }
        LocalizationNames {
            categories,
            class_names: t.classes.iter().map(|c| (i64::from(c.id), c.name.clone())).collect(),
            classes_of,
        }
    }
}

pub fn default_severity_forecast() -> BTreeMap<i64, Severity> {
    BTreeMap::from([(1, Severity::Warning), (2, Severity::Major), (3, Severity::Critical)])
}

/// Severity forecast for the Telstra label scale (0 none, 1 few, 2 many faults).
pub fn telstra_severity_forecast() -> BTreeMap<i64, Severity> {
    BTreeMap::from([(0, Severity::Warning), (1, Severity::Minor), (2, Severity::Major)])
}

pub struct Pipeline {
    pub stage1: Option<Box<dyn Scorer>>,
    pub stage2: Option<Box<dyn Scorer>>,
    pub layer1: Option<Box<dyn Scorer>>,
    pub layer2: BTreeMap<String, Box<dyn Scorer>>,
    pub severity: Option<Box<dyn Scorer>>,
    pub names: LocalizationNames,
    pub severity_forecast: BTreeMap<i64, Severity>,
    pub schema: Option<FeatureSchema>,
}

impl Pipeline {
    /// Checks that every model with a known width agrees on the input width.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        let models = self
            .stage1
            .iter()
            .chain(&self.stage2)
            .chain(&self.layer1)
            .chain(self.layer2.values())
            .chain(&self.severity);
        for m in models {
            if let Some(d) = m.n_features() {
                if d != n_features {
                    return Err(FcpError::Shape(format!(
                        "model expects {d} features, records have {n_features}"
                    )));
                }
            }
        }
        if let Some(s) = &self.schema {
            if s.dim() != n_features {
                return Err(FcpError::Shape(format!(
                    "feature schema has {} columns, records have {n_features}",
                    s.dim()
                )));
            }
        }
        Ok(())
    }

    fn need<'a>(m: &'a Option<Box<dyn Scorer>>, what: &str) -> Result<&'a dyn Scorer> {
        m.as_deref()
            .ok_or_else(|| FcpError::ModelMissing(format!("{what} model not configured")))
    }

    pub fn detect_stage1(&self, x: &[f64]) -> Result<(Stage1, Decision)> {
        let d = Self::need(&self.stage1, "stage-1")?.decide(x)?;
        let s = if d.label == FAULT { Stage1::Fault } else { Stage1::NoFault };
        Ok((s, d))
    }

    pub fn detect_stage2(&self, x: &[f64]) -> Result<(Stage2, Decision)> {
        let d = Self::need(&self.stage2, "stage-2")?.decide(x)?;
        let s = if d.label == MANIFEST { Stage2::Manifest } else { Stage2::Impending };
        Ok((s, d))
    }

    /// (category, class or `None` when no fine model exists, confidences).
    pub fn localize_manifest(&self, x: &[f64]) -> Result<(String, Option<String>, BTreeMap<String, f64>)> {
        let mut conf = BTreeMap::new();
        let category = if self.names.categories.len() == 1 {
            conf.insert("layer1".to_string(), 1.0);
            self.names.categories[0].clone()
        } else {
            let d = Self::need(&self.layer1, "layer-1")?.decide(x)?;
            conf.insert("layer1".to_string(), d.probabilities.iter().copied().fold(0.0, f64::max));
            usize::try_from(d.label)
                .ok()
                .and_then(|i| self.names.categories.get(i))
                .cloned()
                .ok_or_else(|| FcpError::Label(format!("layer-1 model returned category {}", d.label)))?
        };
        let members = self.names.classes_of.get(&category).cloned().unwrap_or_default();
        let class_id = match (members.len(), self.layer2.get(&category)) {
            (1, _) => {
                conf.insert("layer2".to_string(), 1.0);
                Some(members[0])
            }
            (_, Some(m)) => {
                let d = m.decide(x)?;
                conf.insert("layer2".to_string(), d.probabilities.iter().copied().fold(0.0, f64::max));
                Some(d.label)
            }
            (_, None) => None,
        };
        let class_name = match class_id {
            Some(id) => Some(
                self.names
                    .class_names
                    .get(&id)
                    .cloned()
                    .ok_or_else(|| FcpError::Label(format!("layer-2 model returned class {id}")))?,
            ),
            None => None,
        };
        Ok((category, class_name, conf))
    }

    pub fn predict_impending(&self, x: &[f64]) -> Result<(Severity, Option<LocationHint>, Decision)> {
        let d = Self::need(&self.severity, "severity")?.decide(x)?;
        let sev = *self
            .severity_forecast
            .get(&d.label)
            .ok_or_else(|| FcpError::Label(format!("no forecast level for severity class {}", d.label)))?;
        let hint = match &self.schema {
            Some(s) => {
                let col = s.location_column();
                let idx = *x.get(col).ok_or_else(|| FcpError::Shape("record lacks location".into()))?;
                Some(LocationHint {
                    location_index: idx,
                    historical_fault_rate: s.fault_rate_for_index(idx),
                })
            }
            None => None,
        };
        Ok((sev, hint, d))
    }

    pub fn classify(&self, id: RecordId, x: &[f64]) -> FcpVerdict {
        let mut v = FcpVerdict::new(id);
        let fail = |v: &mut FcpVerdict, stage: &str, e: FcpError| {
            v.error = Some(VerdictError {
                stage: stage.to_string(),
                message: e.to_string(),
            });
        };
        let top = |d: &Decision| d.probabilities.iter().copied().fold(0.0, f64::max);
        let (s1, d1) = match self.detect_stage1(x) {
            Ok(r) => r,
            Err(e) => {
                fail(&mut v, "stage1", e);
                return v;
            }
        };
        v.stage1 = Some(s1);
        v.confidences.insert("stage1".into(), top(&d1));
        if s1 == Stage1::NoFault {
            return v;
        }
        let (s2, d2) = match self.detect_stage2(x) {
            Ok(r) => r,
            Err(e) => {
                fail(&mut v, "stage2", e);
                return v;
            }
        };
        v.stage2 = Some(s2);
        v.confidences.insert("stage2".into(), top(&d2));
        match s2 {
            Stage2::Manifest => match self.localize_manifest(x) {
                Ok((cat, class, conf)) => {
                    v.layer2_unavailable = class.is_none();
                    v.layer1_category = Some(cat);
                    v.layer2_class = class;
                    v.confidences.extend(conf);
                }
                Err(e) => fail(&mut v, "localize", e),
            },
            Stage2::Impending => match self.predict_impending(x) {
                Ok((sev, hint, d)) => {
                    v.predicted_severity = Some(sev);
                    v.location_hint = hint;
                    v.confidences.insert("severity".into(), top(&d));
                }
                Err(e) => fail(&mut v, "severity", e),
            },
        }
        v
    }

    /// One verdict per row, in row order.
    pub fn run(&self, records: &DesignMatrix) -> Vec<FcpVerdict> {
        (0..records.n_rows())
            .into_par_iter()
            .map(|i| self.classify(records.ids[i], &records.rows.row(i).to_vec()))
            .collect()
    }
}

/// Pipeline configuration file. Paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub stage_mapping: StageMapping,
    pub stage1: PathBuf,
    pub stage2: PathBuf,
    #[serde(default)]
    pub layer1: Option<PathBuf>,
    #[serde(default)]
    pub layer2: BTreeMap<String, PathBuf>,
    pub severity: PathBuf,
    pub taxonomy: PathBuf,
    /// Severity class → forecast level; defaults to 1 warning, 2 major, 3 critical.
    #[serde(default)]
    pub severity_forecast: Option<BTreeMap<i64, Severity>>,
    /// Telstra feature schema; enables location hints.
    #[serde(default)]
    pub feature_schema: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        if !path.exists() {
            return Err(FcpError::FileMissing(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| FcpError::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| FcpError::parse(path.display().to_string(), e.line() as u64, e.to_string()))?;
        cfg.stage_mapping.validate()?;
        Ok(cfg)
    }

    pub fn build(&self, base: &Path) -> Result<Pipeline> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let load = |p: &Path| -> Result<Box<dyn Scorer>> { Ok(Box::new(load_model(&resolve(p))?)) };
        let taxonomy = ClassTaxonomy::load(&resolve(&self.taxonomy))?;
        let schema = match &self.feature_schema {
            Some(p) => {
                let p = resolve(p);
                let text = std::fs::read_to_string(&p).map_err(|e| FcpError::io(&p, e))?;
                Some(serde_json::from_str(&text).map_err(|e| {
                    FcpError::parse(p.display().to_string(), e.line() as u64, e.to_string())
                })?)
            }
            None => None,
        };
        Ok(Pipeline {
            stage1: Some(load(&self.stage1)?),
            stage2: Some(load(&self.stage2)?),
            layer1: self.layer1.as_deref().map(load).transpose()?,
            layer2: self
                .layer2
                .iter()
                .map(|(k, p)| Ok((k.clone(), load(p)?)))
                .collect::<Result<_>>()?,
            severity: Some(load(&self.severity)?),
            names: LocalizationNames::from_taxonomy(&taxonomy, &self.stage_mapping),
            severity_forecast: self.severity_forecast.clone().unwrap_or_else(default_severity_forecast),
            schema,
        })
    }
}

const CONFIDENCE_KEYS: [&str; 5] = ["stage1", "stage2", "layer1", "layer2", "severity"];

pub fn write_verdict_csv<W: Write>(out: W, verdicts: &[FcpVerdict]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id", "stage1", "stage2", "layer1", "layer2", "severity"];
    let conf_cols: Vec<String> = CONFIDENCE_KEYS.iter().map(|k| format!("confidence_{k}")).collect();
    header.extend(conf_cols.iter().map(String::as_str));
    header.extend(["location_index", "location_fault_rate", "error"]);
    w.write_record(&header).map_err(crate::ingest::csv_err)?;
    let opt = |s: Option<String>| s.unwrap_or_default();
    for v in verdicts {
        let mut rec = vec![
            v.id.to_string(),
            opt(v.stage1.map(|s| match s {
                Stage1::NoFault => "no_fault".to_string(),
                Stage1::Fault => "fault".to_string(),
            })),
            opt(v.stage2.map(|s| match s {
                Stage2::Manifest => "manifest".to_string(),
                Stage2::Impending => "impending".to_string(),
            })),
            opt(v.layer1_category.clone()),
            opt(v.layer2_class.clone()),
            opt(v.predicted_severity.map(|s| s.as_str().to_string())),
        ];
        for k in CONFIDENCE_KEYS {
            rec.push(opt(v.confidences.get(k).map(f64::to_string)));
        }
        rec.push(opt(v.location_hint.as_ref().map(|h| h.location_index.to_string())));
        rec.push(opt(v
            .location_hint
            .as_ref()
            .and_then(|h| h.historical_fault_rate)
            .map(|r| r.to_string())));
        rec.push(opt(v.error.as_ref().map(|e| format!("{}: {}", e.stage, e.message))));
        w.write_record(&rec).map_err(crate::ingest::csv_err)?;
    }
    w.flush().map_err(|e| FcpError::io("<verdict csv>", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_records: usize,
    pub routes: BTreeMap<String, usize>,
    pub verdicts: Vec<FcpVerdict>,
}

impl PipelineReport {
    pub fn new(verdicts: Vec<FcpVerdict>) -> Self {
        let mut routes = BTreeMap::new();
        for v in &verdicts {
            *routes.entry(v.route().to_string()).or_insert(0) += 1;
        }
        PipelineReport {
            n_records: verdicts.len(),
            routes,
            verdicts,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| FcpError::Config(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}
