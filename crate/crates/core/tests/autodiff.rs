use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vtm::autodiff::{AdamW, AdamWConfig, GradcheckConfig, Graph, Tensor};
use vtm::diagnostics::op_checks;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn every_op_matches_central_differences() {
    let checks = op_checks(3, &GradcheckConfig::default()).unwrap();
    assert!(checks.len() >= 20);
    for c in checks {
        assert!(c.report.checked > 0, "{}", c.name);
        assert!(c.report.passed(1e-6), "{}: {:?}", c.name, c.report);
    }
}

/// Textbook zero-padded strided correlation.
fn conv_oracle(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    ci: usize,
    co: usize,
    t: usize,
    k: usize,
    s: usize,
    p: usize,
) -> Vec<f64> {
    let t_out = (t + 2 * p - k) / s + 1;
    let mut y = vec![0.0; co * t_out];
    for o in 0..co {
        for n in 0..t_out {
            let mut acc = b[o];
            for i in 0..ci {
                for kk in 0..k {
                    let pos = (n * s + kk) as isize - p as isize;
                    if pos >= 0 && (pos as usize) < t {
                        acc += x[i * t + pos as usize] * w[(o * ci + i) * k + kk];
                    }
                }
            }
            y[o * t_out + n] = acc;
        }
    }
    y
}

#[test]
fn conv1d_agrees_with_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (t, k, s, p) in [(9, 4, 2, 1), (8, 3, 1, 1), (7, 1, 1, 0), (12, 4, 2, 1)] {
        let x = random(&mut rng, &[1, 3, t]);
        let w = random(&mut rng, &[5, 3, k]);
        let b = random(&mut rng, &[5]);
        let want = conv_oracle(x.data(), w.data(), b.data(), 3, 5, t, k, s, p);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x), g.constant(w), g.constant(b));
        let y = g.conv1d(xv, wv, Some(bv), s, p).unwrap();
        for (a, e) in g.value(y).data().iter().zip(&want) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn transposed_conv_is_the_adjoint_of_conv() {
    // <conv(x; w), y> == <x, conv_t(y; w)> when conv_t uses the same
    // kernel laid out as [c_in_of_transpose = c_out, c_out_of_transpose = c_in, k].
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (ci, co, k, s, p, t) = (3, 4, 4, 2, 1, 16);
    let x = random(&mut rng, &[1, ci, t]);
    let w = random(&mut rng, &[co, ci, k]);
    let mut g = Graph::new();
    let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
    let cx = g.conv1d(xv, wv, None, s, p).unwrap();
    let t_out = g.shape(cx)[2];
    let y = random(&mut rng, &[1, co, t_out]);
    let yv = g.constant(y.clone());
    let wt = g.constant(Tensor::new(vec![co, ci, k], w.data().to_vec()).unwrap());
    let ty = g.conv_transpose1d(yv, wt, None, s, p).unwrap();
    assert_eq!(g.shape(ty), &[1, ci, t]);
    let lhs: f64 = g.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.data().iter().zip(g.value(ty).data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn masked_softmax_rows_are_windowed_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 7;
    let window = 3;
    let x = random(&mut rng, &[2, n, n]);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = g.masked_softmax(xv, window).unwrap();
    let yd = g.value(y).data();
    for b in 0..2 {
        for i in 0..n {
            let row = &yd[(b * n + i) * n..][..n];
            let xr = &x.data()[(b * n + i) * n..][..n];
            let lo = (i + 1).saturating_sub(window);
            let z: f64 = (lo..=i).map(|j| xr[j].exp()).sum();
            for j in 0..n {
                let want = if (lo..=i).contains(&j) {
                    xr[j].exp() / z
                } else {
                    0.0
                };
                assert!((row[j] - want).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn adamw_matches_hand_computed_steps() {
    let cfg = AdamWConfig {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.1,
    };
    let mut opt = AdamW::new(cfg, &[1]);
    let mut p = [2.0];
    let lr = 0.01;
    let (mut m, mut v, mut want) = (0.0, 0.0, 2.0f64);
    for (step, g) in [0.5, -1.5, 0.25].into_iter().enumerate() {
        opt.step(&mut [&mut p[..]], &[&[g][..]], lr).unwrap();
        // Decoupled decay first, then the bias-corrected Adam update.
        want -= lr * 0.1 * want;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let t = (step + 1) as i32;
        let mh = m / (1.0 - 0.9f64.powi(t));
        let vh = v / (1.0 - 0.999f64.powi(t));
        want -= lr * mh / (vh.sqrt() + 1e-8);
        assert!((p[0] - want).abs() < 1e-15, "step {step}: {} vs {want}", p[0]);
    }
    assert_eq!(opt.steps(), 3);
}

#[test]
fn gradients_accumulate_over_reused_nodes() {
    // f(x) = sum(x * x + x) has gradient 2x + 1.
    let x = Tensor::new(vec![3], vec![0.5, -2.0, 3.0]).unwrap();
    let mut g = Graph::new();
    let xv = g.variable(x.clone());
    let sq = g.mul(xv, xv).unwrap();
    let s = g.add(sq, xv).unwrap();
    let out = g.sum(s);
    g.backward(out).unwrap();
    let grad = g.grad(xv).unwrap();
    for (gi, xi) in grad.iter().zip(x.data()) {
        assert_eq!(*gi, 2.0 * xi + 1.0);
    }
}

#[test]
fn backward_needs_a_scalar() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::zeros(&[2]));
    assert_eq!(g.backward(x).unwrap_err().code(), "E_SHAPE");
}
