use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vtm::autodiff::{Graph, Tensor};
use vtm::losses::{
    bone_loss, manifold_alignment_loss, motion_rec_loss, smoothness_loss, vtm_total_loss, JointWeights,
    VtmLossTerms, VtmLossWeights,
};
use vtm::skeleton::layout;

const J: usize = layout::NUM_JOINTS;
const T: usize = 8;

fn sl1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

fn random(rng: &mut ChaCha8Rng, c: usize, t: usize, spread: f64) -> Tensor {
    Tensor::new(
        vec![1, c, t],
        (0..c * t).map(|_| rng.gen_range(-spread..spread)).collect(),
    )
    .unwrap()
}

/// Weight of channel `c` of the non-root tensor: joint `c / 12 + 1`.
fn non_root_weight(c: usize) -> f64 {
    let j = c / 12 + 1;
    if layout::END_EFFECTORS.contains(&j) {
        1.5
    } else {
        1.0
    }
}

/// Mean smooth-L1 between `a` and `b` scaled by `w(c)`, over frames `from..T`
/// of the `order`-th time difference.
fn diff_term(a: &Tensor, b: &Tensor, order: usize, w: impl Fn(usize) -> f64) -> f64 {
    let (c_n, t_n) = (a.shape()[1], a.shape()[2]);
    let diff = |x: &Tensor, c: usize, t: usize| -> f64 {
        let v = |k: usize| x.data()[c * t_n + k];
        match order {
            0 => v(t),
            1 => v(t) - v(t - 1),
            _ => v(t) - 2.0 * v(t - 1) + v(t - 2),
        }
    };
    let mut acc = 0.0;
    let mut n = 0;
    for c in 0..c_n {
        for t in order..t_n {
            acc += sl1(w(c) * diff(a, c, t) - w(c) * diff(b, c, t));
            n += 1;
        }
    }
    acc / n as f64
}

struct Case {
    pr: Tensor,
    r: Tensor,
    pnr: Tensor,
    nr: Tensor,
}

fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Case {
        pr: random(&mut rng, 8, T, 2.0),
        r: random(&mut rng, 8, T, 2.0),
        pnr: random(&mut rng, (J - 1) * 12, T, 2.0),
        nr: random(&mut rng, (J - 1) * 12, T, 2.0),
    }
}

fn eval(c: &Case, f: impl Fn(&mut Graph, [vtm::autodiff::Var; 4]) -> vtm::autodiff::Var) -> f64 {
    let mut g = Graph::new();
    let vars = [
        g.constant(c.pr.clone()),
        g.constant(c.r.clone()),
        g.constant(c.pnr.clone()),
        g.constant(c.nr.clone()),
    ];
    let out = f(&mut g, vars);
    g.value(out).item()
}

#[test]
fn reconstruction_matches_scalar_loop() {
    let w = JointWeights::default();
    for seed in 0..5 {
        let c = case(seed);
        let got = eval(&c, |g, v| motion_rec_loss(g, v[0], v[1], v[2], v[3], &w).unwrap());
        let want = diff_term(&c.pr, &c.r, 0, |_| 2.0) + diff_term(&c.pnr, &c.nr, 0, non_root_weight);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn smoothness_matches_scalar_loop() {
    let w = JointWeights::default();
    for seed in 10..15 {
        let c = case(seed);
        let got = eval(&c, |g, v| smoothness_loss(g, v[0], v[1], v[2], v[3], &w).unwrap());
        let want = diff_term(&c.pr, &c.r, 1, |_| 2.0)
            + diff_term(&c.pnr, &c.nr, 1, |_| 1.0)
            + diff_term(&c.pr, &c.r, 2, |_| 2.0)
            + diff_term(&c.pnr, &c.nr, 2, |_| 1.0);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn smoothness_ignores_per_channel_offsets() {
    let w = JointWeights::default();
    let c = case(20);
    let shift = |x: &Tensor| {
        let t = x.shape()[2];
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + (i / t) as f64 * 0.37 - 3.0)
            .collect();
        Tensor::new(x.shape().to_vec(), data).unwrap()
    };
    let shifted = Case {
        pr: shift(&c.r),
        r: c.r.clone(),
        pnr: shift(&c.nr),
        nr: c.nr.clone(),
    };
    let got = eval(&shifted, |g, v| {
        smoothness_loss(g, v[0], v[1], v[2], v[3], &w).unwrap()
    });
    assert!(got.abs() < 1e-24);
}

#[test]
fn doubling_weights_doubles_a_linear_branch_loss() {
    // With every |difference| >= 1 after weighting, smooth-L1 is |d| - 1/2,
    // so doubling all weights maps L to 2L + 1/2 per mean term (two terms).
    let mut c = case(30);
    for (p, t) in [(&mut c.pr, &c.r), (&mut c.pnr, &c.nr)] {
        let data = t.data().iter().map(|v| v + 1.0).collect();
        *p = Tensor::new(t.shape().to_vec(), data).unwrap();
    }
    let ones = JointWeights {
        root: 1.0,
        end_effector: 1.0,
        other: 1.0,
        ..JointWeights::default()
    };
    let twos = JointWeights {
        root: 2.0,
        end_effector: 2.0,
        other: 2.0,
        ..JointWeights::default()
    };
    let l1 = eval(&c, |g, v| {
        motion_rec_loss(g, v[0], v[1], v[2], v[3], &ones).unwrap()
    });
    let l2 = eval(&c, |g, v| {
        motion_rec_loss(g, v[0], v[1], v[2], v[3], &twos).unwrap()
    });
    assert!((l1 - 1.0).abs() < 1e-12);
    assert!((l2 - (2.0 * l1 + 1.0)).abs() < 1e-12);
}

#[test]
fn alignment_is_symmetric_and_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (a, b) = (random(&mut rng, 128, 8, 2.0), random(&mut rng, 128, 8, 2.0));
    let (c, d) = (random(&mut rng, 64, 8, 2.0), random(&mut rng, 64, 8, 2.0));
    let run = |x: &Tensor, y: &Tensor, z: &Tensor, w: &Tensor| {
        let mut g = Graph::new();
        let v: Vec<_> = [x, y, z, w].iter().map(|t| g.constant((*t).clone())).collect();
        let out = manifold_alignment_loss(&mut g, v[0], v[1], v[2], v[3]).unwrap();
        g.value(out).item()
    };
    let want = diff_term(&a, &b, 0, |_| 1.0) + diff_term(&c, &d, 0, |_| 1.0);
    let got = run(&a, &b, &c, &d);
    assert!((got - want).abs() < 1e-12);
    assert_eq!(got, run(&b, &a, &d, &c));
}

#[test]
fn total_is_the_weighted_sum_of_its_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let values: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..3.0)).collect();
    let weights = VtmLossWeights {
        alignment: 0.5,
        bone: 2.0,
        prediction: 1.5,
        prediction_smoothness: 0.25,
        motion: 3.0,
    };
    for (w, want) in [
        (VtmLossWeights::default(), values.iter().sum::<f64>()),
        (
            weights,
            0.5 * values[0]
                + 2.0 * values[1]
                + 1.5 * values[2]
                + 0.25 * values[3]
                + 3.0 * (values[4] + values[5]),
        ),
    ] {
        let mut g = Graph::new();
        let v: Vec<_> = values.iter().map(|x| g.constant(Tensor::scalar(*x))).collect();
        let terms = VtmLossTerms {
            alignment: v[0],
            bone: v[1],
            prediction: v[2],
            prediction_smoothness: v[3],
            reconstruction: v[4],
            smoothness: v[5],
        };
        let out = vtm_total_loss(&mut g, &terms, &w).unwrap();
        assert!((g.value(out).item() - want).abs() < 1e-12);
    }
}

#[test]
fn matching_inputs_give_zero_and_shapes_are_checked() {
    let c = case(60);
    let w = JointWeights::default();
    let same = Case {
        pr: c.r.clone(),
        r: c.r.clone(),
        pnr: c.nr.clone(),
        nr: c.nr.clone(),
    };
    assert_eq!(
        eval(&same, |g, v| motion_rec_loss(g, v[0], v[1], v[2], v[3], &w)
            .unwrap()),
        0.0
    );
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[1, 23]));
    let b = g.constant(Tensor::zeros(&[1, 22]));
    assert_eq!(bone_loss(&mut g, a, b).unwrap_err().code(), "E_SHAPE");
    let short = g.constant(Tensor::zeros(&[1, 8, 2]));
    let short_nr = g.constant(Tensor::zeros(&[1, 276, 2]));
    let e = smoothness_loss(&mut g, short, short, short_nr, short_nr, &w).unwrap_err();
    assert_eq!(e.code(), "E_SHAPE");
}
