use std::collections::BTreeMap;
use std::path::Path;

use fcp_core::ingest::{kde_design_matrix, load_kde_table, DesignMatrix};
use fcp_core::model::{fit, Algo};
use fcp_core::persist::save_model;
use fcp_core::pipeline::{
    build_training_sets, default_severity_forecast, FailingModel, LocalizationNames, Pipeline, PipelineConfig,
    Scorer, Severity, Stage1, Stage2, StageMapping, StubModel, FAULT, IMPENDING, MANIFEST, NO_FAULT,
};
use fcp_core::shallow::{ShallowAlgo, SvmHyper};
use fcp_core::synthgen::{generate_dataset, BandwidthRule, ChainConfig, ClassTaxonomy};
use ndarray::Array2;

fn data_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

fn taxonomy() -> ClassTaxonomy {
    ClassTaxonomy::load(&data_dir().join("mobile_taxonomy.json")).unwrap()
}

fn stub(labels: &[i64], label: i64) -> Option<Box<dyn Scorer>> {
    Some(Box::new(StubModel::always(labels, label)))
}

/// Pipeline over the shipped taxonomy with every decision fixed.
fn stubbed(stage1: i64, stage2: i64, category: usize, class: i64, severity: i64) -> Pipeline {
    let tax = taxonomy();
    let names = LocalizationNames::from_taxonomy(&tax, &StageMapping::default());
    let n_cat = names.categories.len() as i64;
    let mut layer2: BTreeMap<String, Box<dyn Scorer>> = BTreeMap::new();
    for (cat, members) in &names.classes_of {
        if members.len() > 1 {
            let pick = if members.contains(&class) { class } else { members[0] };
            layer2.insert(cat.clone(), Box::new(StubModel::always(members, pick)));
        }
    }
    Pipeline {
        stage1: stub(&[NO_FAULT, FAULT], stage1),
        stage2: stub(&[IMPENDING, MANIFEST], stage2),
        layer1: stub(&(0..n_cat).collect::<Vec<_>>(), category as i64),
        layer2,
        severity: stub(&[1, 2, 3], severity),
        names,
        severity_forecast: default_severity_forecast(),
        schema: None,
    }
}

fn records(n: usize) -> DesignMatrix {
    DesignMatrix::new(
        Array2::from_shape_fn((n, 8), |(i, j)| (i + j) as f64),
        vec![0; n],
        (0..8).map(|j| format!("f{j}")).collect(),
        (100..100 + n as u64).collect(),
    )
    .unwrap()
}

#[test]
fn stub_truth_table_follows_the_routing() {
    let x = [0.0; 8];
    for s1 in [NO_FAULT, FAULT] {
        for s2 in [IMPENDING, MANIFEST] {
            let v = stubbed(s1, s2, 0, 1, 2).classify(1, &x);
            v.check_invariants().unwrap();
            assert!(v.error.is_none());
            match (s1, s2) {
                (NO_FAULT, _) => {
                    assert_eq!(v.stage1, Some(Stage1::NoFault));
                    assert_eq!(v.stage2, None);
                    assert!(v.layer1_category.is_none() && v.predicted_severity.is_none());
                    assert_eq!(v.route(), "no_fault");
                }
                (_, MANIFEST) => {
                    assert_eq!(v.stage2, Some(Stage2::Manifest));
                    assert!(v.layer1_category.is_some() && v.layer2_class.is_some());
                    assert!(v.predicted_severity.is_none());
                    assert_eq!(v.route(), "manifest");
                }
                _ => {
                    assert_eq!(v.stage2, Some(Stage2::Impending));
                    assert_eq!(v.predicted_severity, Some(Severity::Major));
                    assert!(v.layer1_category.is_none() && v.layer2_class.is_none());
                    assert_eq!(v.route(), "impending");
                }
            }
        }
    }
}

#[test]
fn class_three_is_reported_as_no_roaming() {
    let p = stubbed(FAULT, MANIFEST, 0, 3, 1);
    let v = p.classify(7, &[0.0; 8]);
    assert_eq!(v.layer1_category.as_deref(), Some(p.names.categories[0].as_str()));
    assert_eq!(v.layer2_class.as_deref(), Some("No Roaming"));
}

#[test]
fn single_manifest_class_needs_no_fine_model() {
    let mut p = stubbed(FAULT, MANIFEST, 0, 1, 1);
    let idx = p.names.categories.iter().position(|c| c == "Network Performance").unwrap();
    p.layer1 = stub(&(0..p.names.categories.len() as i64).collect::<Vec<_>>(), idx as i64);
    let v = p.classify(1, &[0.0; 8]);
    assert_eq!(v.layer2_class.as_deref(), Some("Data not working"));
    assert!(!v.layer2_unavailable);
}

#[test]
fn missing_fine_model_sets_the_flag() {
    let mut p = stubbed(FAULT, MANIFEST, 0, 1, 1);
    p.layer2.clear();
    let v = p.classify(1, &[0.0; 8]);
    v.check_invariants().unwrap();
    assert!(v.layer1_category.is_some());
    assert!(v.layer2_class.is_none() && v.layer2_unavailable);
}

#[test]
fn single_category_taxonomy_skips_layer_one() {
    let mut p = stubbed(FAULT, MANIFEST, 0, 1, 1);
    p.names.categories.truncate(1);
    p.layer1 = None;
    let v = p.classify(1, &[0.0; 8]);
    assert_eq!(v.layer1_category.as_deref(), Some(p.names.categories[0].as_str()));
    assert_eq!(v.confidences["layer1"], 1.0);
}

#[test]
fn reported_label_is_the_argmax_of_its_probabilities() {
    let mut p = stubbed(FAULT, IMPENDING, 0, 1, 1);
    p.severity = Some(Box::new(StubModel {
        labels: vec![1, 2, 3],
        output: vec![0.2, 0.3, 0.5],
    }));
    let v = p.classify(1, &[0.0; 8]);
    assert_eq!(v.predicted_severity, Some(Severity::Critical));
    assert_eq!(v.confidences["severity"], 0.5);
}

#[test]
fn failures_at_every_stage_keep_the_invariants() {
    let x = [0.0; 8];
    let fail = || -> Option<Box<dyn Scorer>> { Some(Box::new(FailingModel)) };
    let cases: Vec<(&str, Pipeline)> = vec![
        ("stage1", Pipeline { stage1: fail(), ..stubbed(FAULT, MANIFEST, 0, 1, 1) }),
        ("stage2", Pipeline { stage2: fail(), ..stubbed(FAULT, MANIFEST, 0, 1, 1) }),
        ("localize", Pipeline { layer1: fail(), ..stubbed(FAULT, MANIFEST, 0, 1, 1) }),
        ("severity", Pipeline { severity: fail(), ..stubbed(FAULT, IMPENDING, 0, 1, 1) }),
        ("stage1", Pipeline { stage1: None, ..stubbed(FAULT, MANIFEST, 0, 1, 1) }),
        ("severity", Pipeline { severity: None, ..stubbed(FAULT, IMPENDING, 0, 1, 1) }),
    ];
    for (stage, p) in cases {
        let v = p.classify(9, &x);
        v.check_invariants().unwrap();
        assert_eq!(v.route(), "error");
        assert_eq!(v.error.as_ref().unwrap().stage, stage);
    }
}

#[test]
fn majority_stub_still_completes_every_verdict() {
    let p = stubbed(FAULT, IMPENDING, 0, 1, 1);
    for v in p.run(&records(20)) {
        v.check_invariants().unwrap();
        assert_eq!(v.predicted_severity, Some(Severity::Warning));
    }
}

#[test]
fn batches_preserve_order_and_ignore_partitioning() {
    let p = stubbed(FAULT, MANIFEST, 1, 5, 1);
    let all = records(30);
    let whole = p.run(&all);
    let first = p.run(&all.select(&(0..13).collect::<Vec<_>>()));
    let rest = p.run(&all.select(&(13..30).collect::<Vec<_>>()));
    assert_eq!(whole, [first, rest].concat());
    assert!(whole.iter().map(|v| v.id).eq(100..130));
}

#[test]
fn training_sets_follow_the_stage_mapping() {
    let extract = load_kde_table(&data_dir().join("kde_extract.csv")).unwrap();
    let sets = build_training_sets(&extract, &taxonomy(), &StageMapping::default()).unwrap();
    let label_of = |m: &DesignMatrix, docket: u64| m.ids.iter().position(|&d| d == docket).map(|i| m.labels[i]);
    assert_eq!(label_of(&sets.stage1, 68), Some(NO_FAULT));
    assert_eq!(label_of(&sets.stage1, 215), Some(FAULT));
    assert_eq!(label_of(&sets.stage2, 52), Some(IMPENDING));
    assert_eq!(label_of(&sets.stage2, 215), Some(MANIFEST));
    assert_eq!(label_of(&sets.stage2, 68), None);
    assert_eq!(label_of(&sets.severity, 215), Some(3));
}

#[test]
fn trained_pipeline_from_config_file() {
    let tax = taxonomy();
    let cfg = ChainConfig { seed: 3, burn_in: 200, ..ChainConfig::default() };
    let recs = generate_dataset(&tax, 900, &cfg, &BandwidthRule::Silverman).unwrap();
    let sets = build_training_sets(&recs, &tax, &StageMapping::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let svm = Algo::Shallow(ShallowAlgo::Svm(SvmHyper::default()));
    let mut layer2 = serde_json::Map::new();
    for (name, m) in [("stage1", &sets.stage1), ("stage2", &sets.stage2), ("layer1", &sets.layer1), ("severity", &sets.severity)] {
        save_model(&fit(m, &svm, name).unwrap(), &dir.path().join(format!("{name}.json"))).unwrap();
    }
    for (i, (cat, m)) in sets.layer2.iter().enumerate() {
        if m.classes().len() > 1 {
            let file = format!("layer2_{i}.json");
            save_model(&fit(m, &svm, "localize").unwrap(), &dir.path().join(&file)).unwrap();
            layer2.insert(cat.clone(), file.into());
        }
    }
    std::fs::copy(data_dir().join("mobile_taxonomy.json"), dir.path().join("taxonomy.json")).unwrap();
    let config = serde_json::json!({
        "stage1": "stage1.json", "stage2": "stage2.json", "layer1": "layer1.json",
        "layer2": layer2, "severity": "severity.json", "taxonomy": "taxonomy.json"
    });
    let cfg_path = dir.path().join("pipeline.json");
    std::fs::write(&cfg_path, config.to_string()).unwrap();
    let pipeline = PipelineConfig::load(&cfg_path).unwrap().build(dir.path()).unwrap();

    let fresh = generate_dataset(&tax, 300, &ChainConfig { seed: 4, ..cfg }, &BandwidthRule::Silverman).unwrap();
    let m = kde_design_matrix(&fresh, |r| i64::from(r.severity)).unwrap();
    pipeline.validate(m.n_features()).unwrap();
    let verdicts = pipeline.run(&m);
    let mut hits = 0;
    for (v, r) in verdicts.iter().zip(&fresh) {
        v.check_invariants().unwrap();
        assert!(v.error.is_none());
        hits += usize::from((v.stage1 == Some(Stage1::Fault)) == (r.severity > 0));
    }
    assert!(hits as f64 / fresh.len() as f64 > 0.9, "stage-1 agreement {hits}/300");
}
