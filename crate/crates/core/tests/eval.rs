use std::collections::BTreeMap;
use std::path::PathBuf;

use fcp_core::error::FcpError;
use fcp_core::eval::{confusion, kfold, metrics, stratified_folds, MetricsReport, Predictions};
use fcp_core::ingest::DesignMatrix;
use fcp_core::rng;
use ndarray::Array2;
use rand::Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fixtures").join(name)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn ten_instance_fixture_matches_hand_computed_report() {
    let file = std::fs::File::open(fixture("metric_fixture.csv")).unwrap();
    let preds = Predictions::read_csv(file, "metric_fixture.csv").unwrap();
    let got = preds.report().unwrap();
    let golden: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(fixture("metric_fixture_golden.json")).unwrap()).unwrap();
    assert_eq!(got.n, golden.n);
    assert_eq!(got.confusion, golden.confusion);
    for (a, b) in [
        (got.accuracy, golden.accuracy),
        (got.weighted_precision, golden.weighted_precision),
        (got.macro_precision, golden.macro_precision),
        (got.weighted_tp_rate, golden.weighted_tp_rate),
        (got.weighted_fp_rate, golden.weighted_fp_rate),
        (got.mae, golden.mae),
        (got.rmse, golden.rmse),
    ] {
        assert!(close(a, b), "{a} vs {b}");
    }
    for (g, w) in got.per_class.iter().zip(&golden.per_class) {
        assert_eq!((g.class, g.support), (w.class, w.support));
        assert!(close(g.precision, w.precision));
        assert!(close(g.tp_rate, w.tp_rate));
        assert!(close(g.fp_rate, w.fp_rate));
    }
}

#[test]
fn predictions_round_trip_through_csv() {
    let file = std::fs::File::open(fixture("metric_fixture.csv")).unwrap();
    let preds = Predictions::read_csv(file, "fixture").unwrap();
    let mut buf = Vec::new();
    preds.write_csv(&mut buf).unwrap();
    assert_eq!(Predictions::read_csv(buf.as_slice(), "again").unwrap(), preds);
}

#[test]
fn single_instance_by_hand() {
    let r = metrics(&[0], &Array2::from_shape_vec((1, 2), vec![0.8, 0.2]).unwrap()).unwrap();
    assert!(close(r.mae, 0.2));
    assert!(close(r.rmse, 0.2));
    assert_eq!(r.accuracy, 1.0);
}

#[test]
fn confusion_matches_independent_tally() {
    let mut r = rng::seeded(1);
    let t: Vec<usize> = (0..100).map(|_| r.random_range(0..4)).collect();
    let p: Vec<usize> = (0..100).map(|_| r.random_range(0..4)).collect();
    let cm = confusion(&t, &p, 4).unwrap();
    let mut tally: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (&a, &b) in t.iter().zip(&p) {
        *tally.entry((a, b)).or_default() += 1;
    }
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(cm[[i, j]], tally.get(&(i, j)).copied().unwrap_or(0));
        }
    }
    let all_one = confusion(&t, &vec![1; 100], 4).unwrap();
    for i in 0..4 {
        for j in [0, 2, 3] {
            assert_eq!(all_one[[i, j]], 0);
        }
    }
}

#[test]
fn binary_fp_rate_of_one_class_is_complement_of_other_tp_rate() {
    let mut r = rng::seeded(2);
    let t: Vec<usize> = (0..200).map(|_| r.random_range(0..2)).collect();
    let mut probs = Array2::zeros((200, 2));
    for i in 0..200 {
        let p: f64 = r.random();
        probs[[i, 0]] = p;
        probs[[i, 1]] = 1.0 - p;
    }
    let rep = metrics(&t, &probs).unwrap();
    assert!(close(rep.per_class[0].fp_rate, 1.0 - rep.per_class[1].tp_rate));
    assert!(close(rep.per_class[1].fp_rate, 1.0 - rep.per_class[0].tp_rate));
}

fn toy(n: usize, labels: impl Fn(usize) -> i64) -> DesignMatrix {
    let rows = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
    DesignMatrix::new(
        rows,
        (0..n).map(labels).collect(),
        vec!["a".into(), "b".into()],
        (1..=n as u64).collect(),
    )
    .unwrap()
}

/// Trainer that always puts all mass on the given class column.
fn constant(class: usize) -> impl Fn(&DesignMatrix, &DesignMatrix, &[i64]) -> fcp_core::error::Result<Array2<f64>> + Sync {
    move |_tr, te, classes| {
        let mut p = Array2::zeros((te.n_rows(), classes.len()));
        p.column_mut(class).fill(1.0);
        Ok(p)
    }
}

#[test]
fn leave_one_out_on_single_class_rows() {
    // every class needs at least k members, so LOO needs a single class
    let data = toy(10, |_| 0);
    let r = kfold(&data, 10, &constant(0), 3).unwrap();
    assert_eq!(r.folds.len(), 10);
    assert!(r.folds.iter().all(|f| f.n == 1));
}

#[test]
fn constant_trainer_scores_modal_frequency() {
    let data = toy(30, |i| if i % 3 == 0 { 1 } else { 0 });
    let r = kfold(&data, 5, &constant(0), 4).unwrap();
    assert!(close(r.pooled.accuracy, 20.0 / 30.0));
    let weighted: f64 = r.folds.iter().map(|f| f.accuracy * f.n as f64).sum::<f64>() / 30.0;
    assert!(close(r.pooled.accuracy, weighted));
}

#[test]
fn fold_assignment_replays_and_rejects_thin_classes() {
    let labels: Vec<i64> = (0..40).map(|i| i % 4).collect();
    assert_eq!(stratified_folds(&labels, 5, 9).unwrap(), stratified_folds(&labels, 5, 9).unwrap());
    assert!(matches!(stratified_folds(&labels, 11, 9), Err(FcpError::Stratify(_))));
}
