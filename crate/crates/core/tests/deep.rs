use fcp_core::deep::*;
use fcp_core::rng;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_matrix(r: &mut rng::Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.random_range(lo..hi))
}

/// Largest relative error of the analytic gradient over `coords` random
/// coordinates, using central differences with step 1e-5.
fn fd_check<F>(theta: &[f64], grad: &[f64], coords: usize, seed: u64, f: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut r = rng::seeded(seed);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let i = r.random_range(0..theta.len());
        let mut p = theta.to_vec();
        p[i] += step;
        let up = f(&p);
        p[i] -= 2.0 * step;
        let down = f(&p);
        let num = (up - down) / (2.0 * step);
        let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn autoencoder_gradient_matches_finite_differences() {
    let mut r = rng::seeded(11);
    let layer = AutoencoderLayer::init(6, 4, &mut r);
    let mut layer = layer;
    layer.b1.mapv_inplace(|_| r.random_range(-0.5..0.5));
    layer.b2.mapv_inplace(|_| r.random_range(-0.5..0.5));
    let x = random_matrix(&mut r, 8, 6, 0.0, 1.0);
    let hyper = SparseHyper { beta: 4.0, rho: 0.1, l2: 0.001, ..SparseHyper::default() };
    let (_, g) = ae_loss_and_grad(&layer, &x, &hyper).unwrap();
    let theta = layer.to_flat();
    let err = fd_check(&theta, &g.to_flat(), 40, 1, |p| {
        ae_loss(&layer.from_flat(p), &x, &hyper).unwrap()
    });
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn duplicated_batch_same_gradient() {
    let mut r = rng::seeded(12);
    let layer = AutoencoderLayer::init(5, 3, &mut r);
    let x = random_matrix(&mut r, 6, 5, 0.0, 1.0);
    let doubled = ndarray::concatenate(ndarray::Axis(0), &[x.view(), x.view()]).unwrap();
    let hyper = SparseHyper::default();
    let a = ae_grad(&layer, &x, &hyper).unwrap().to_flat();
    let b = ae_grad(&layer, &doubled, &hyper).unwrap().to_flat();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()));
    }
}

#[test]
fn loss_matches_naive_loop() {
    let mut r = rng::seeded(13);
    let layer = AutoencoderLayer::init(7, 3, &mut r);
    let x = random_matrix(&mut r, 9, 7, 0.0, 1.0);
    let hyper = SparseHyper { beta: 2.5, rho: 0.2, l2: 0.01, ..SparseHyper::default() };
    let fast = ae_loss(&layer, &x, &hyper).unwrap();

    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let (n, d, h) = (9, 7, 3);
    let mut data = 0.0;
    let mut mean_act = vec![0.0; h];
    for i in 0..n {
        let mut a = vec![0.0; h];
        for j in 0..h {
            let mut z = layer.b1[j];
            for k in 0..d {
                z += layer.w1[[j, k]] * x[[i, k]];
            }
            a[j] = sig(z);
            mean_act[j] += a[j] / n as f64;
        }
        for k in 0..d {
            let mut z = layer.b2[k];
            for j in 0..h {
                z += layer.w2[[k, j]] * a[j];
            }
            data += 0.5 * (sig(z) - x[[i, k]]).powi(2);
        }
    }
    let mut loss = data / n as f64;
    for p in mean_act {
        loss += 2.5 * (0.2 * (0.2 / p).ln() + 0.8 * (0.8 / (1.0 - p)).ln());
    }
    let sq: f64 = layer.w1.iter().chain(layer.w2.iter()).map(|v| v * v).sum();
    loss += 0.005 * sq;
    assert!((fast - loss).abs() < 1e-12);
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut r = rng::seeded(21);
    let h = random_matrix(&mut r, 10, 5, 0.0, 1.0);
    let y: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let head = SoftmaxHead {
        w: random_matrix(&mut r, 3, 5, -1.0, 1.0),
        b: ndarray::Array1::from(vec![0.1, -0.2, 0.3]),
    };
    let (_, g) = softmax_loss_and_grad(&head, &h, &y).unwrap();
    let err = fd_check(&head.to_flat(), &g.to_flat(), 18, 2, |p| {
        softmax_loss_and_grad(&head.from_flat(p), &h, &y).unwrap().0
    });
    assert!(err < 1e-6, "relative error {err:e}");
}

fn blobs(seed: u64, per_class: usize, centres: &[[f64; 2]]) -> (Array2<f64>, Vec<i64>) {
    let mut r = rng::seeded(seed);
    let n = per_class * centres.len();
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for (c, centre) in centres.iter().enumerate() {
        for i in 0..per_class {
            let row = c * per_class + i;
            for j in 0..2 {
                let z: f64 = r.sample(StandardNormal);
                x[[row, j]] = centre[j] + z;
            }
            y.push(c as i64 + 1);
        }
    }
    (x, y)
}

fn small_config(sizes: Vec<usize>, seed: u64) -> StackConfig {
    StackConfig {
        seed,
        ..StackConfig::default()
    }
    .with_sizes(sizes)
}

#[test]
fn finetune_gradient_matches_finite_differences() {
    let (x, y) = blobs(5, 4, &[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]]);
    let mut cfg = small_config(vec![4, 3], 9);
    cfg.layers.iter_mut().for_each(|l| l.epochs = 5);
    cfg.softmax_epochs = 5;
    cfg.finetune_epochs = 0;
    let (model, _) = train_stack(&x, &y, &cfg).unwrap();
    let xs = model.scaling.apply(&x).unwrap();
    let yi: Vec<usize> = y.iter().map(|&v| (v - 1) as usize).collect();
    let theta = model.params_flat();
    let (_, g) = finetune_loss_and_grad(&model, &xs, &yi).unwrap();
    let err = fd_check(&theta, &g, 30, 3, |p| {
        finetune_loss_and_grad(&model.with_params(p), &xs, &yi).unwrap().0
    });
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn one_dimensional_manifold_reconstructs() {
    let mut r = rng::seeded(31);
    let x = Array2::from_shape_fn((200, 4), |_| 0.0);
    let mut x = x;
    for mut row in x.rows_mut() {
        let t: f64 = r.random_range(0.1..0.9);
        row.fill(t);
    }
    let hyper = SparseHyper { beta: 0.0, l2: 0.0, epochs: 400, ..SparseHyper::default() };
    let t = ae_train(&x, 1, &hyper, &mut rng::seeded(1)).unwrap();
    let mse = t.layer.reconstruction_mse(&x).unwrap();
    assert!(mse < 0.01, "mse {mse}");
    let tail = &t.trace.losses[t.trace.losses.len() * 9 / 10..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn training_is_deterministic() {
    let (x, y) = blobs(6, 10, &[[0.0, 0.0], [5.0, 5.0]]);
    let mut cfg = small_config(vec![4, 2], 4);
    cfg.layers.iter_mut().for_each(|l| l.epochs = 30);
    cfg.softmax_epochs = 30;
    cfg.finetune_epochs = 30;
    let a = train_stack(&x, &y, &cfg).unwrap().0;
    let b = train_stack(&x, &y, &cfg).unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn separable_blobs_fully_recovered() {
    let centres = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let (x, y) = blobs(7, 40, &centres);
    let (tx, ty) = blobs(8, 20, &centres);
    let (model, _) = train_stack(&x, &y, &small_config(vec![8, 4], 1)).unwrap();
    let pred = model.predict_batch(&tx).unwrap();
    assert_eq!(pred, ty);
}

#[test]
fn composition_without_finetune() {
    let (x, y) = blobs(9, 10, &[[0.0, 0.0], [4.0, 4.0]]);
    let mut cfg = small_config(vec![3, 2], 2);
    cfg.finetune_epochs = 0;
    cfg.layers.iter_mut().for_each(|l| l.epochs = 20);
    cfg.softmax_epochs = 20;
    let (model, report) = train_stack(&x, &y, &cfg).unwrap();
    assert!(!model.fine_tuned);
    let xs = model.scaling.apply(&x).unwrap();
    let h1 = report.pretrained[0].encode(&xs).unwrap();
    let h2 = report.pretrained[1].encode(&h1).unwrap();
    let p = model.softmax.probabilities(&h2).unwrap();
    assert_eq!(p, model.probabilities(&x).unwrap());
    for row in p.outer_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn forward_matches_naive_neurons() {
    let (x, y) = blobs(10, 6, &[[0.0, 0.0], [2.0, 1.0], [1.0, 3.0]]);
    let mut cfg = small_config(vec![5, 3], 3);
    cfg.layers.iter_mut().for_each(|l| l.epochs = 10);
    cfg.softmax_epochs = 10;
    cfg.finetune_epochs = 10;
    let (model, _) = train_stack(&x, &y, &cfg).unwrap();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    for row in x.outer_iter() {
        let mut a: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(j, v)| (v - model.scaling.min[j]) / model.scaling.range[j])
            .collect();
        for e in &model.encoders {
            a = (0..e.output_dim())
                .map(|u| sig(e.b[u] + (0..a.len()).map(|k| e.w[[u, k]] * a[k]).sum::<f64>()))
                .collect();
        }
        let z: Vec<f64> = (0..model.softmax.n_classes())
            .map(|c| model.softmax.b[c] + (0..a.len()).map(|k| model.softmax.w[[c, k]] * a[k]).sum::<f64>())
            .collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let (_, p) = model.predict(row.as_slice().unwrap()).unwrap();
        for c in 0..z.len() {
            assert!((p[c] - (z[c] - m).exp() / s).abs() < 1e-12);
        }
    }
}

#[test]
fn sweep_cardinality_and_replay() {
    let (x, y) = blobs(12, 15, &[[0.0, 0.0], [4.0, 4.0]]);
    let (vx, vy) = blobs(13, 5, &[[0.0, 0.0], [4.0, 4.0]]);
    let mut base = small_config(vec![4, 2], 5);
    base.layers.iter_mut().for_each(|l| l.epochs = 15);
    base.softmax_epochs = 15;
    base.finetune_epochs = 15;
    let data = SweepData { train_x: &x, train_y: &y, val_x: &vx, val_y: &vy };
    let cells = sweep_hidden_sizes(&data, &[3, 4, 5], &[2, 3], &base).unwrap();
    assert_eq!(cells.len(), 6);
    assert!(cells.iter().all(|c| c.accuracy.is_finite() && c.mse.is_finite()));
    let (m, _) = train_stack(&x, &y, &base.clone().with_sizes(vec![4, 3])).unwrap();
    let pred = m.predict_batch(&vx).unwrap();
    let acc = pred.iter().zip(&vy).filter(|(a, b)| a == b).count() as f64 / vy.len() as f64;
    let cell = cells.iter().find(|c| c.h1 == 4 && c.h2 == 3).unwrap();
    assert_eq!(cell.accuracy, acc);

    let mut buf = Vec::new();
    write_size_csv(&mut buf, &cells).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("h1,h2,accuracy,mse\n"));
    assert_eq!(text.lines().count(), 7);
}
