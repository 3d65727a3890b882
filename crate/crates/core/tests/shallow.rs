use fcp_core::ingest::{kde_design_matrix, split, DesignMatrix};
use fcp_core::model::{fit, Algo};
use fcp_core::rng;
use fcp_core::shallow::{
    dual_objective, train_adt_traced, train_multiclass, train_rf, train_svm, train_svm_traced, AdtHyper,
    BinaryModel, Kernel, KernelChoice, RfHyper, ShallowAlgo, SvmHyper, TreeNode,
};
use fcp_core::synthgen::{generate_dataset, BandwidthRule, ChainConfig, ClassTaxonomy};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn blobs(seed: u64, per_class: usize, centres: &[(f64, f64)], sd: f64) -> (Array2<f64>, Vec<i64>) {
    let mut r = rng::seeded(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, &(cx, cy)) in centres.iter().enumerate() {
        for _ in 0..per_class {
            x.push(cx + noise.sample(&mut r));
            x.push(cy + noise.sample(&mut r));
            y.push(k as i64);
        }
    }
    (Array2::from_shape_vec((y.len(), 2), x).unwrap(), y)
}

fn signs(y: &[i64]) -> Vec<i8> {
    y.iter().map(|&l| if l == 0 { -1 } else { 1 }).collect()
}

#[test]
fn kkt_conditions_hold_on_separable_task() {
    let (x, y) = blobs(11, 100, &[(-2.0, -2.0), (2.0, 2.0)], 0.8);
    let y = signs(&y);
    let hyper = SvmHyper::default();
    let (model, trace) = train_svm_traced(&x, &y, &hyper).unwrap();
    assert!(trace.converged);
    let tol = hyper.tol;
    let c = hyper.c;
    for i in 0..y.len() {
        let a = trace.alphas[i];
        let m = f64::from(y[i]) * model.decision(&x.row(i).to_vec()).unwrap();
        if a == 0.0 {
            assert!(m >= 1.0 - tol, "free point {i}: margin {m}");
        } else if a < c {
            assert!((m - 1.0).abs() <= tol, "support vector {i}: margin {m}");
        } else {
            assert!(m <= 1.0 + tol, "bound point {i}: margin {m}");
        }
    }
    let balance: f64 = trace.alphas.iter().zip(&y).map(|(a, &l)| a * f64::from(l)).sum();
    assert!(balance.abs() < 1e-8);
    for w in trace.objective.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "objective fell from {} to {}", w[0], w[1]);
    }
}

/// Best dual objective over α ∈ {0, 0.01, ..., C}^4 with Σ α_i y_i = 0, for
/// labels (+1, +1, −1, −1). For fixed (α1, α2) the objective is a concave
/// quadratic along α3 (α4 follows), so only the grid points next to its
/// continuous maximizer need evaluating.
fn xor_grid_optimum(x: &Array2<f64>, y: &[i8], kernel: &Kernel, c: f64) -> f64 {
    let steps = (c / 0.01).round() as i64;
    let eval = |i1: i64, i2: i64, i3: i64| {
        let i4 = i1 + i2 - i3;
        let a = [i1, i2, i3, i4].map(|i| i as f64 * 0.01);
        dual_objective(x, y, &a, kernel)
    };
    let mut best = f64::NEG_INFINITY;
    for i1 in 0..=steps {
        for i2 in 0..=steps {
            let lo = (i1 + i2 - steps).max(0);
            let hi = (i1 + i2).min(steps);
            let (f0, f1, f2) = (eval(i1, i2, lo), eval(i1, i2, lo + 1), eval(i1, i2, lo + 2));
            let curv = f2 - 2.0 * f1 + f0;
            let slope = f1 - f0 - 0.5 * curv;
            let mut cands = vec![lo, hi];
            if curv < 0.0 {
                let t = lo as f64 - slope / curv;
                for c in [t.floor() as i64, t.ceil() as i64] {
                    cands.push(c.clamp(lo, hi));
                }
            }
            for i3 in cands {
                best = best.max(eval(i1, i2, i3));
            }
        }
    }
    best
}

#[test]
fn xor_smo_reaches_grid_optimum() {
    let x = Array2::from_shape_vec((4, 2), vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
    let y = [1, 1, -1, -1];
    let hyper = SvmHyper {
        c: 10.0,
        kernel: KernelChoice::Rbf { gamma: Some(1.0) },
        ..SvmHyper::default()
    };
    let (model, trace) = train_svm_traced(&x, &y, &hyper).unwrap();
    for i in 0..4 {
        assert_eq!(model.predict(&x.row(i).to_vec()).unwrap().0, y[i]);
    }
    let smo = dual_objective(&x, &y, &trace.alphas, &model.kernel);
    let grid = xor_grid_optimum(&x, &y, &model.kernel, 10.0);
    assert!(smo >= grid - 1e-3, "SMO {smo} below grid {grid}");
}

#[test]
fn decision_matches_naive_kernel_sum() {
    let (x, y) = blobs(3, 30, &[(0.0, 0.0), (1.5, 0.5)], 1.0);
    let model = train_svm(&x, &signs(&y), &SvmHyper::default()).unwrap();
    let gamma = match model.kernel {
        Kernel::Rbf { gamma } => gamma,
        Kernel::Linear => unreachable!(),
    };
    let mut r = rng::seeded(4);
    for _ in 0..20 {
        let q = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
        let mut f = model.bias;
        for (s, coef) in model.support_vectors.outer_iter().zip(&model.dual_coefs) {
            let d2 = (s[0] - q[0]).powi(2) + (s[1] - q[1]).powi(2);
            f += coef * (-gamma * d2).exp();
        }
        let got = model.decision(&q).unwrap();
        assert!((got - f).abs() <= 1e-12 * f.abs().max(1.0));
    }
}

#[test]
fn adt_score_is_sum_over_reachable_paths() {
    let (x, y) = blobs(5, 60, &[(0.0, 0.0), (1.0, 1.0)], 0.9);
    let y = signs(&y);
    let (model, losses) = train_adt_traced(&x, &y, &AdtHyper { rounds: 12 }).unwrap();
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "loss rose from {} to {}", w[0], w[1]);
    }
    for row in x.outer_iter() {
        let q = row.to_vec();
        // a splitter contributes iff every condition on its path holds
        let mut brute = model.root_value;
        for (s, sp) in model.splitters.iter().enumerate() {
            let reached = model
                .precondition_path(s)
                .iter()
                .all(|&(p, branch)| (q[model.splitters[p].feature] < model.splitters[p].threshold) == branch);
            if reached {
                brute += if q[sp.feature] < sp.threshold { sp.value_true } else { sp.value_false };
            }
        }
        assert!((model.score(&q).unwrap() - brute).abs() < 1e-12);
    }
}

fn gini(labels: &[i64]) -> f64 {
    let n = labels.len() as f64;
    let mut counts = std::collections::BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0.0) += 1.0;
    }
    1.0 - counts.values().map(|c: &f64| (c / n).powi(2)).sum::<f64>()
}

/// Exhaustive best threshold over midpoints of a 1-D sample; None when pure
/// or no split improves impurity.
fn oracle_split(xs: &[f64], ys: &[i64]) -> Option<f64> {
    if gini(ys) == 0.0 {
        return None;
    }
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut best: Option<(f64, f64)> = None;
    for w in sorted.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let (l, r): (Vec<i64>, Vec<i64>) = {
            let l = xs.iter().zip(ys).filter(|(x, _)| **x < t).map(|(_, y)| *y).collect();
            let r = xs.iter().zip(ys).filter(|(x, _)| **x >= t).map(|(_, y)| *y).collect();
            (l, r)
        };
        let n = ys.len() as f64;
        let imp = l.len() as f64 / n * gini(&l) + r.len() as f64 / n * gini(&r);
        if best.is_none_or(|(b, _)| imp < b - 1e-12) {
            best = Some((imp, t));
        }
    }
    best.map(|(_, t)| t)
}

fn check_node(nodes: &[TreeNode], at: usize, xs: &[f64], ys: &[i64]) {
    match (&nodes[at], oracle_split(xs, ys)) {
        (TreeNode::Leaf { .. }, None) => {}
        (TreeNode::Split { threshold, left, right, .. }, Some(t)) => {
            assert!((threshold - t).abs() < 1e-12, "split at {threshold}, oracle {t}");
            let (mut lx, mut ly, mut rx, mut ry) = (vec![], vec![], vec![], vec![]);
            for (&x, &y) in xs.iter().zip(ys) {
                if x < t {
                    lx.push(x);
                    ly.push(y);
                } else {
                    rx.push(x);
                    ry.push(y);
                }
            }
            check_node(nodes, *left, &lx, &ly);
            check_node(nodes, *right, &rx, &ry);
        }
        (node, oracle) => panic!("tree node {node:?} but oracle split {oracle:?}"),
    }
}

#[test]
fn single_tree_matches_exhaustive_gini_oracle() {
    let xs = [0.3, 1.1, 1.9, 2.2, 3.7, 4.0, 5.5, 6.1];
    let ys = [0, 0, 1, 0, 1, 1, 0, 1];
    let x = Array2::from_shape_vec((8, 1), xs.to_vec()).unwrap();
    let hyper = RfHyper {
        n_trees: 1,
        mtry: Some(1),
        bootstrap: false,
        ..RfHyper::default()
    };
    let m = train_rf(&x, &ys, &hyper).unwrap();
    check_node(&m.trees[0].nodes, 0, &xs, &ys);
}

#[test]
fn forest_votes_match_independent_tally() {
    let (x, y) = blobs(8, 40, &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 0.7);
    let m = train_rf(&x, &y, &RfHyper { n_trees: 25, seed: 3, ..RfHyper::default() }).unwrap();
    for row in x.outer_iter().take(30) {
        let q = row.to_vec();
        let mut tally = [0.0; 3];
        for t in &m.trees {
            tally[t.predict_index(&q)] += 1.0;
        }
        let p = m.probabilities(&q).unwrap();
        for k in 0..3 {
            assert_eq!(p[k], tally[k] / 25.0);
        }
    }
}

#[test]
fn forest_is_independent_of_thread_count() {
    let (x, y) = blobs(9, 50, &[(0.0, 0.0), (1.0, 1.0)], 1.0);
    let hyper = RfHyper { n_trees: 30, seed: 17, ..RfHyper::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_rf(&x, &y, &hyper).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn oob_error_tracks_holdout_error() {
    let (x, y) = blobs(21, 1000, &[(0.0, 0.0), (1.5, 1.0)], 1.0);
    let (xt, yt) = blobs(22, 1000, &[(0.0, 0.0), (1.5, 1.0)], 1.0);
    let m = train_rf(&x, &y, &RfHyper { seed: 5, ..RfHyper::default() }).unwrap();
    let wrong = xt
        .outer_iter()
        .zip(&yt)
        .filter(|(r, &l)| m.predict(&r.to_vec()).unwrap().0 != l)
        .count();
    let holdout = wrong as f64 / yt.len() as f64;
    assert!((m.oob_error - holdout).abs() < 0.05, "oob {} vs holdout {holdout}", m.oob_error);
}

#[test]
fn two_class_ovr_agrees_with_binary_model() {
    let (x, y) = blobs(12, 60, &[(0.0, 0.0), (2.0, 1.0)], 1.0);
    let algo = ShallowAlgo::Svm(SvmHyper::default());
    let ovr = train_multiclass(&x, &y, &algo).unwrap();
    let bin = BinaryModel::train(&x, &signs(&y), &algo).unwrap();
    let agree = x
        .outer_iter()
        .filter(|r| {
            let q = r.to_vec();
            let a = ovr.predict(&q).unwrap();
            let b = i64::from(bin.predict(&q).unwrap() > 0);
            a == b
        })
        .count();
    assert!(agree as f64 / y.len() as f64 >= 0.99);
}

#[test]
fn separated_blobs_are_classified_perfectly() {
    let centres = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
    let (x, y) = blobs(13, 40, &centres, 1.0);
    let (xt, yt) = blobs(14, 40, &centres, 1.0);
    for algo in [
        ShallowAlgo::Svm(SvmHyper::default()),
        ShallowAlgo::Rf(RfHyper::default()),
        ShallowAlgo::Adt(AdtHyper::default()),
    ] {
        let m = train_multiclass(&x, &y, &algo).unwrap();
        for (r, &l) in xt.outer_iter().zip(&yt) {
            assert_eq!(m.predict(&r.to_vec()).unwrap(), l, "{}", algo.name());
        }
    }
}

#[test]
fn kde_localization_beats_majority_baseline() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mobile_taxonomy.json");
    let mut tax = ClassTaxonomy::load(std::path::Path::new(path)).unwrap();
    tax.normal = None;
    let cfg = ChainConfig { seed: 42, ..ChainConfig::default() };
    let records = generate_dataset(&tax, 1400, &cfg, &BandwidthRule::Silverman).unwrap();
    let m: DesignMatrix = kde_design_matrix(&records, |r| i64::from(r.class.unwrap())).unwrap();
    let (train, _, test) = split(&m, (0.7, 0.0, 0.3), 42).unwrap();
    let model = fit(&train, &Algo::Shallow(ShallowAlgo::Svm(SvmHyper::default())), "localize").unwrap();
    let pred = model.predict_batch(&test.rows).unwrap();
    let acc = pred.iter().zip(&test.labels).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64;
    let mut counts = std::collections::BTreeMap::new();
    for l in &test.labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let majority = *counts.values().max().unwrap() as f64 / test.n_rows() as f64;
    assert!(acc >= majority + 0.20, "accuracy {acc}, majority {majority}");
}
