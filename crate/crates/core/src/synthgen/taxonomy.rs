use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kde::{fit_kde, sample_markov, BandwidthRule, ChainConfig, KdeModel};
use crate::error::{FcpError, Result};
use crate::ingest::{load_kde_table, KdeRecord, KDE_FEATURES};
use crate::rng;

/// Mobile-network fault markers usable as KDE features.
pub const MOBILE_FEATURES: [&str; 26] = [
    "BTS hardware",
    "Radio link phase",
    "EVM",
    "C/I ratio",
    "BSIC fault",
    "BCC fault",
    "Time slot short",
    "Power",
    "Rx noise",
    "Antenna tilt",
    "Occupied BW",
    "Filter fault",
    "TCH Congestion",
    "POI Congestion",
    "Temperature",
    "Hypervisor",
    "HLR",
    "VLR",
    "Billing",
    "MS",
    "Virtual resource",
    "ID Signal Strength",
    "OD Signal Strength",
    "Handover",
    "CSSR",
    "SDCCH Congestion",
];

/// Mobile-network fault classes, ids 1..=7.
pub const MOBILE_FAULT_CLASSES: [&str; 7] = [
    "Call drop",
    "Call setup",
    "No Roaming",
    "Weak Signal",
    "No registration",
    "No outgoing",
    "Data not working",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultClass {
    pub id: u32,
    pub name: String,
    /// Severity stamped on generated records of this class.
    pub severity: u8,
    /// Broad fault category used by the first localization layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer1: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<Vec<f64>>,
}

/// Fault-free operating points, emitted with severity 0 and no class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalProfile {
    pub fraction: f64,
    #[serde(default)]
    pub seeds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    #[serde(default)]
    pub name: String,
    pub features: Vec<String>,
    pub classes: Vec<FaultClass>,
    pub priors: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<NormalProfile>,
    /// KDE-table CSV whose rows add seeds: rows with a class go to that
    /// class, rows with severity 0 and no class go to the normal profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_csv: Option<PathBuf>,
}

impl ClassTaxonomy {
    pub fn from_json(text: &str) -> Result<ClassTaxonomy> {
        let t: ClassTaxonomy = serde_json::from_str(text)
            .map_err(|e| FcpError::parse("<taxonomy>", e.line() as u64, e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    /// Reads a taxonomy file, resolving `seed_csv` relative to it.
    pub fn load(path: &Path) -> Result<ClassTaxonomy> {
        if !path.is_file() {
            return Err(FcpError::FileMissing(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| FcpError::io(path, e))?;
        let mut t = Self::from_json(&text)?;
        if let Some(csv) = t.seed_csv.take() {
            let csv = if csv.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(csv)
            } else {
                csv
            };
            t.add_seed_records(&load_kde_table(&csv)?)?;
        }
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(FcpError::Config("taxonomy has no classes".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.id != i as u32 + 1 {
                return Err(FcpError::Config(format!(
                    "class ids must be unique and contiguous from 1; found {} at position {i}",
                    c.id
                )));
            }
        }
        if self.priors.len() != self.classes.len() {
            return Err(FcpError::Config(format!(
                "{} priors for {} classes",
                self.priors.len(),
                self.classes.len()
            )));
        }
        check_priors(&self.priors)?;
        let d = self.features.len();
        let seeds = self
            .classes
            .iter()
            .flat_map(|c| c.seeds.iter())
            .chain(self.normal.iter().flat_map(|n| n.seeds.iter()));
        for s in seeds {
            if s.len() != d {
                return Err(FcpError::Shape(format!(
                    "seed sample of length {} for {d} features",
                    s.len()
                )));
            }
        }
        if let Some(n) = &self.normal {
            if !(0.0..1.0).contains(&n.fraction) {
                return Err(FcpError::Config(format!(
                    "normal fraction {} outside [0, 1)",
                    n.fraction
                )));
            }
        }
        Ok(())
    }

    pub fn add_seed_records(&mut self, records: &[KdeRecord]) -> Result<()> {
        for r in records {
            if r.features.len() != self.features.len() {
                return Err(FcpError::Shape(format!(
                    "seed docket {} has {} features",
                    r.docket,
                    r.features.len()
                )));
            }
            match r.class {
                Some(c) => {
                    let class = self
                        .classes
                        .iter_mut()
                        .find(|k| k.id == c)
                        .ok_or_else(|| FcpError::Config(format!("seed class {c} not in taxonomy")))?;
                    class.seeds.push(r.features.clone());
                }
                None if r.severity == 0 => {
                    if let Some(n) = self.normal.as_mut() {
                        n.seeds.push(r.features.clone());
                    }
                }
                None => {}
            }
        }
        Ok(())
    }

    pub fn class_name(&self, id: u32) -> Option<&str> {
        self.classes
            .iter()
            .find(|c| c.id == id)
            .map(|c| c.name.as_str())
    }

    /// Distinct layer-1 categories, in first-appearance order.
    pub fn layer1_categories(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.classes {
            if let Some(l) = &c.layer1 {
                if !out.contains(l) {
                    out.push(l.clone());
                }
            }
        }
        out
    }

    /// Category of each class id.
    pub fn layer1_of(&self) -> BTreeMap<u32, String> {
        self.classes
            .iter()
            .filter_map(|c| c.layer1.clone().map(|l| (c.id, l)))
            .collect()
    }

    /// One KDE per class, fitted on its seeds.
    pub fn fit_models(&self, rule: &BandwidthRule) -> Result<Vec<KdeModel>> {
        self.classes
            .iter()
            .map(|c| {
                if c.seeds.is_empty() {
                    return Err(FcpError::Config(format!("class {} has no seed samples", c.name)));
                }
                Ok(fit_kde(&seed_matrix(&c.seeds)?, rule)?.with_class(c.id))
            })
            .collect()
    }

    pub fn fit_normal_model(&self, rule: &BandwidthRule) -> Result<Option<KdeModel>> {
        match &self.normal {
            Some(n) if n.fraction > 0.0 => {
                if n.seeds.is_empty() {
                    return Err(FcpError::Config("normal profile has no seed samples".into()));
                }
                Ok(Some(fit_kde(&seed_matrix(&n.seeds)?, rule)?))
            }
            _ => Ok(None),
        }
    }
}

fn seed_matrix(seeds: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = seeds[0].len();
    let flat: Vec<f64> = seeds.iter().flatten().copied().collect();
    Array2::from_shape_vec((seeds.len(), d), flat).map_err(|e| FcpError::Shape(e.to_string()))
}

fn check_priors(priors: &[f64]) -> Result<()> {
    if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(FcpError::Config(format!("invalid priors {priors:?}")));
    }
    if (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(FcpError::Config(format!("priors {priors:?} do not sum to 1")));
    }
    Ok(())
}

/// Class index for each of `n` records: one uniform draw per record from
/// `stream(seed, 1)`, mapped through the cumulative prior.
pub fn draw_classes(priors: &[f64], n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, 1);
    let last = priors.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in priors.iter().enumerate() {
                acc += p;
                if u < acc && *p > 0.0 {
                    return k;
                }
            }
            last
        })
        .collect()
}

/// Labeled synthetic fault records. Class counts follow a seeded multinomial
/// draw; each class's features come from its own Metropolis chain seeded
/// with `cfg.seed + class_id`.
pub fn generate_labeled(
    taxonomy: &ClassTaxonomy,
    per_class: &[KdeModel],
    priors: &[f64],
    n: usize,
    cfg: &ChainConfig,
) -> Result<Vec<KdeRecord>> {
    cfg.validate()?;
    let k = taxonomy.classes.len();
    if per_class.len() != k {
        return Err(FcpError::Config(format!(
            "{} class models for {k} classes",
            per_class.len()
        )));
    }
    if priors.len() != k {
        return Err(FcpError::Config(format!("{} priors for {k} classes", priors.len())));
    }
    check_priors(priors)?;
    for (c, m) in taxonomy.classes.iter().zip(per_class) {
        if m.class_label.is_some_and(|l| l != c.id) {
            return Err(FcpError::Config(format!("no model for class {}", c.id)));
        }
        if m.dim() != taxonomy.features.len() {
            return Err(FcpError::Shape(format!(
                "class {} model has {} dimensions, taxonomy has {} features",
                c.id,
                m.dim(),
                taxonomy.features.len()
            )));
        }
    }
    let assignment = draw_classes(priors, n, cfg.seed);
    let mut counts = vec![0usize; k];
    for &c in &assignment {
        counts[c] += 1;
    }
    let draws: Vec<Option<Array2<f64>>> = counts
        .iter()
        .enumerate()
        .map(|(ci, &count)| {
            if count == 0 {
                return Ok(None);
            }
            let class_cfg = ChainConfig {
                seed: cfg.seed.wrapping_add(u64::from(taxonomy.classes[ci].id)),
                ..*cfg
            };
            sample_markov(&per_class[ci], count, &class_cfg).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut next = vec![0usize; k];
    Ok(assignment
        .iter()
        .enumerate()
        .map(|(i, &ci)| {
            let row = draws[ci].as_ref().expect("class with draws").row(next[ci]).to_vec();
            next[ci] += 1;
            let class = &taxonomy.classes[ci];
            KdeRecord::new(i as u64 + 1, row, class.severity, Some(class.id))
        })
        .collect())
}

/// Full synthetic dataset: fault records per the taxonomy plus, when the
/// taxonomy declares a normal profile, fault-free records. Records are
/// shuffled and dockets renumbered from 1.
pub fn generate_dataset(
    taxonomy: &ClassTaxonomy,
    n: usize,
    cfg: &ChainConfig,
    rule: &BandwidthRule,
) -> Result<Vec<KdeRecord>> {
    if taxonomy.features.len() != KDE_FEATURES.len() {
        return Err(FcpError::Config(format!(
            "KDE tables carry {} features, taxonomy declares {}",
            KDE_FEATURES.len(),
            taxonomy.features.len()
        )));
    }
    cfg.validate()?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let normal_model = taxonomy.fit_normal_model(rule)?;
    let n_normal = match (&normal_model, &taxonomy.normal) {
        (Some(_), Some(p)) => (n as f64 * p.fraction).round() as usize,
        _ => 0,
    };
    let models = taxonomy.fit_models(rule)?;
    let mut records = if n > n_normal {
        generate_labeled(taxonomy, &models, &taxonomy.priors, n - n_normal, cfg)?
    } else {
        Vec::new()
    };
    if let Some(model) = normal_model.filter(|_| n_normal > 0) {
        let normal_cfg = ChainConfig {
            seed: rng::stream(cfg.seed, 2).random(),
            ..*cfg
        };
        let draws = sample_markov(&model, n_normal, &normal_cfg)?;
        records.extend(
            draws
                .outer_iter()
                .map(|row| KdeRecord::new(0, row.to_vec(), 0, None)),
        );
    }
    records.shuffle(&mut rng::stream(cfg.seed, 3));
    for (i, r) in records.iter_mut().enumerate() {
        r.docket = i as u64 + 1;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ClassTaxonomy {
        ClassTaxonomy::from_json(
            r#"{"features": ["a", "b"],
                "classes": [{"id": 1, "name": "x", "severity": 2, "seeds": [[0,0],[1,1],[0,1]]},
                            {"id": 2, "name": "y", "severity": 1, "seeds": [[5,5],[6,5],[5,7]]},
                            {"id": 3, "name": "No Roaming", "severity": 3, "seeds": [[9,0],[8,1],[9,2]]}],
                "priors": [0.3, 0.3, 0.4]}"#,
        )
        .unwrap()
    }

    fn cfg() -> ChainConfig {
        ChainConfig {
            burn_in: 20,
            thin: 2,
            proposal_scale: 1.0,
            seed: 5,
        }
    }

    #[test]
    fn one_hot_prior_routes_everything() {
        let t = toy();
        let models = t.fit_models(&BandwidthRule::Silverman).unwrap();
        let recs = generate_labeled(&t, &models, &[0.0, 0.0, 1.0], 25, &cfg()).unwrap();
        assert_eq!(recs.len(), 25);
        assert!(recs.iter().all(|r| r.class == Some(3) && r.severity == 3));
        assert_eq!(t.class_name(3), Some("No Roaming"));
    }

    #[test]
    fn zero_records() {
        let t = toy();
        let models = t.fit_models(&BandwidthRule::Silverman).unwrap();
        assert!(generate_labeled(&t, &models, &t.priors, 0, &cfg()).unwrap().is_empty());
    }

    #[test]
    fn missing_model_is_config_error() {
        let t = toy();
        let models = t.fit_models(&BandwidthRule::Silverman).unwrap();
        assert!(matches!(
            generate_labeled(&t, &models[..2], &t.priors, 5, &cfg()),
            Err(FcpError::Config(_))
        ));
        let mut swapped = models.clone();
        swapped.swap(0, 1);
        assert!(matches!(
            generate_labeled(&t, &swapped, &t.priors, 5, &cfg()),
            Err(FcpError::Config(_))
        ));
    }

    #[test]
    fn rejects_non_contiguous_ids() {
        let err = ClassTaxonomy::from_json(
            r#"{"features": ["a"], "classes": [{"id": 2, "name": "x", "severity": 1}], "priors": [1.0]}"#,
        );
        assert!(matches!(err, Err(FcpError::Config(_))));
    }

    #[test]
    fn priors_must_sum_to_one() {
        let err = ClassTaxonomy::from_json(
            r#"{"features": ["a"], "classes": [{"id": 1, "name": "x", "severity": 1}], "priors": [0.9]}"#,
        );
        assert!(matches!(err, Err(FcpError::Config(_))));
    }

    #[test]
    fn class_draws_follow_cumulative_prior() {
        let c = draw_classes(&[0.0, 1.0, 0.0], 10, 3);
        assert!(c.iter().all(|&k| k == 1));
    }
}
