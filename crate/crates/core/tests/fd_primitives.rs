//! Central finite-difference checks for every tape primitive:
//! 100 random trials per op, relative error ≤ 1e-4, inputs in [-2, 2].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scae_core::gradcheck;
use scae_core::{Tape, TensorId};

const TRIALS: usize = 100;
const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Keeps values away from a kink at `c` so central differences stay valid.
fn rand_vec_avoiding(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, c: f64, margin: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let v = rng.gen_range(lo..hi);
            if (v - c).abs() > margin {
                break v;
            }
        })
        .collect()
}

/// Random weights turn a tensor-valued op into a scalar loss with a
/// non-trivial upstream gradient.
fn weighted_sum(t: &mut Tape<f64>, x: TensorId, w: &[f64]) -> scae_core::Result<TensorId> {
    let shape = t.shape(x).to_vec();
    let c = t.constant(&shape, w.to_vec())?;
    let p = t.mul(x, c)?;
    t.sum_all(p)
}

fn check_n<F>(seed: u64, trials: usize, mut make: F)
where
    F: FnMut(&mut ChaCha8Rng) -> (Vec<(Vec<usize>, Vec<f64>)>, Box<dyn FnMut(&mut Tape<f64>, &[TensorId]) -> scae_core::Result<TensorId>>),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (inputs, mut build) = make(&mut rng);
        let err = gradcheck::check(&inputs, STEP, |t, ids| build(t, ids)).unwrap();
        worst = worst.max(err);
    }
    assert!(worst <= TOL, "worst relative error {worst:e} exceeds {TOL:e}");
}

macro_rules! unary_fd {
    ($test:ident, $seed:expr, $lo:expr, $hi:expr, $apply:expr) => {
        #[test]
        fn $test() {
            check_n($seed, TRIALS, |rng| {
                let x = rand_vec(rng, 6, $lo, $hi);
                let w = rand_vec(rng, 6, -1.0, 1.0);
                let apply: fn(&mut Tape<f64>, TensorId) -> TensorId = $apply;
                (
                    vec![(vec![2, 3], x)],
                    Box::new(move |t, ids| {
                        let y = apply(t, ids[0]);
                        weighted_sum(t, y, &w)
                    }),
                )
            });
        }
    };
}

unary_fd!(fd_neg, 1, -2.0, 2.0, |t, x| t.neg(x));
unary_fd!(fd_exp, 2, -2.0, 2.0, |t, x| t.exp(x));
unary_fd!(fd_log, 3, 0.1, 2.0, |t, x| t.log(x));
unary_fd!(fd_sqrt, 4, 0.1, 2.0, |t, x| t.sqrt(x));
unary_fd!(fd_sigmoid, 5, -2.0, 2.0, |t, x| t.sigmoid(x));
unary_fd!(fd_softplus, 6, -2.0, 2.0, |t, x| t.softplus(x));
unary_fd!(fd_sin, 7, -2.0, 2.0, |t, x| t.sin(x));
unary_fd!(fd_cos, 8, -2.0, 2.0, |t, x| t.cos(x));
unary_fd!(fd_add_scalar, 9, -2.0, 2.0, |t, x| t.add_scalar(x, 0.7));
unary_fd!(fd_mul_scalar, 10, -2.0, 2.0, |t, x| t.mul_scalar(x, -1.3));

#[test]
fn fd_relu_abs_clamp_away_from_kinks() {
    for (seed, f) in [
        (11u64, (|t, x| t.relu(x)) as fn(&mut Tape<f64>, TensorId) -> TensorId),
        (12, |t, x| t.abs(x)),
        (13, |t, x| t.clamp_min(x, 0.25)),
    ] {
        check_n(seed, TRIALS, |rng| {
            let x = rand_vec_avoiding(rng, 6, -2.0, 2.0, if seed == 13 { 0.25 } else { 0.0 }, 0.05);
            let w = rand_vec(rng, 6, -1.0, 1.0);
            (
                vec![(vec![6], x)],
                Box::new(move |t, ids| {
                    let y = f(t, ids[0]);
                    weighted_sum(t, y, &w)
                }),
            )
        });
    }
}

#[test]
fn fd_binary_broadcast() {
    type B = fn(&mut Tape<f64>, TensorId, TensorId) -> scae_core::Result<TensorId>;
    let cases: [(u64, B, f64); 4] = [
        (21, |t, a, b| t.add(a, b), 0.0),
        (22, |t, a, b| t.sub(a, b), 0.0),
        (23, |t, a, b| t.mul(a, b), 0.0),
        (24, |t, a, b| t.div(a, b), 0.3),
    ];
    for (seed, f, b_margin) in cases {
        check_n(seed, TRIALS, |rng| {
            let a = rand_vec(rng, 6, -2.0, 2.0);
            let b = rand_vec_avoiding(rng, 3, -2.0, 2.0, 0.0, b_margin);
            let w = rand_vec(rng, 6, -1.0, 1.0);
            (
                vec![(vec![2, 3], a), (vec![3], b)],
                Box::new(move |t, ids| {
                    let y = f(t, ids[0], ids[1])?;
                    weighted_sum(t, y, &w)
                }),
            )
        });
    }
}

#[test]
fn fd_atan2() {
    check_n(25, TRIALS, |rng| {
        // Keep radius away from the origin.
        let y: Vec<f64> = rand_vec_avoiding(rng, 4, -2.0, 2.0, 0.0, 0.3);
        let x: Vec<f64> = rand_vec_avoiding(rng, 4, -2.0, 2.0, 0.0, 0.3);
        let w = rand_vec(rng, 4, -1.0, 1.0);
        (
            vec![(vec![4], y), (vec![4], x)],
            Box::new(move |t, ids| {
                let v = t.atan2(ids[0], ids[1])?;
                weighted_sum(t, v, &w)
            }),
        )
    });
}

#[test]
fn fd_matmul_plain_and_batched() {
    check_n(31, TRIALS / 2, |rng| {
        let a = rand_vec(rng, 6, -2.0, 2.0);
        let b = rand_vec(rng, 12, -2.0, 2.0);
        let w = rand_vec(rng, 8, -1.0, 1.0);
        (
            vec![(vec![2, 3], a), (vec![3, 4], b)],
            Box::new(move |t, ids| {
                let y = t.matmul(ids[0], ids[1])?;
                weighted_sum(t, y, &w)
            }),
        )
    });
    check_n(32, TRIALS / 2, |rng| {
        // Broadcast batch: [2,2,3] x [3,2].
        let a = rand_vec(rng, 12, -2.0, 2.0);
        let b = rand_vec(rng, 6, -2.0, 2.0);
        let w = rand_vec(rng, 8, -1.0, 1.0);
        (
            vec![(vec![2, 2, 3], a), (vec![3, 2], b)],
            Box::new(move |t, ids| {
                let y = t.matmul(ids[0], ids[1])?;
                weighted_sum(t, y, &w)
            }),
        )
    });
}

#[test]
fn fd_conv2d_both_strides() {
    for (seed, stride) in [(41u64, 1usize), (42, 2)] {
        check_n(seed, 30, |rng| {
            let x = rand_vec(rng, 4 * 5 * 2, -2.0, 2.0);
            let w = rand_vec(rng, 3 * 3 * 2 * 3, -1.0, 1.0);
            let (oh, ow) = (4usize.div_ceil(stride), 5usize.div_ceil(stride));
            let lw = rand_vec(rng, oh * ow * 3, -1.0, 1.0);
            (
                vec![(vec![1, 4, 5, 2], x), (vec![3, 3, 2, 3], w)],
                Box::new(move |t, ids| {
                    let y = t.conv2d(ids[0], ids[1], stride)?;
                    weighted_sum(t, y, &lw)
                }),
            )
        });
    }
}

#[test]
fn fd_grid_sample() {
    check_n(51, 50, |rng| {
        let tmpl = rand_vec(rng, 3 * 4 * 2, -2.0, 2.0);
        // Grid points clear of pixel-cell boundaries (bilinear kinks).
        let mut grid = Vec::with_capacity(2 * 3 * 2);
        for i in 0..6 {
            let extent = if i % 2 == 0 { 4.0 } else { 3.0 };
            loop {
                let v: f64 = rng.gen_range(-1.2..1.2);
                let px = (v + 1.0) * 0.5 * extent - 0.5;
                if (px - px.round()).abs() > 1e-3 {
                    grid.push(v);
                    break;
                }
            }
        }
        let w = rand_vec(rng, 1 * 3 * 1 * 2, -1.0, 1.0);
        (
            vec![(vec![3, 4, 2], tmpl), (vec![1, 3, 1, 2], grid)],
            Box::new(move |t, ids| {
                let y = t.grid_sample(ids[0], ids[1])?;
                weighted_sum(t, y, &w)
            }),
        )
    });
}

#[test]
fn fd_reductions_and_norms() {
    // sum over mixed axes
    check_n(61, TRIALS, |rng| {
        let x = rand_vec(rng, 12, -2.0, 2.0);
        let w = rand_vec(rng, 3, -1.0, 1.0);
        (
            vec![(vec![2, 3, 2], x)],
            Box::new(move |t, ids| {
                let y = t.sum_axes(ids[0], &[0, 2], false)?;
                weighted_sum(t, y, &w)
            }),
        )
    });
    // mean keeps dims
    check_n(62, TRIALS, |rng| {
        let x = rand_vec(rng, 12, -2.0, 2.0);
        let w = rand_vec(rng, 4, -1.0, 1.0);
        (
            vec![(vec![2, 3, 2], x)],
            Box::new(move |t, ids| {
                let y = t.mean_axes(ids[0], &[1], true)?;
                let flat = t.reshape(y, &[4])?;
                weighted_sum(t, flat, &w)
            }),
        )
    });
    // max with distinct entries (ties are the kink)
    check_n(63, TRIALS, |rng| {
        let mut x = rand_vec(rng, 12, -2.0, 2.0);
        for (i, v) in x.iter_mut().enumerate() {
            *v += i as f64 * 1e-3;
        }
        let w = rand_vec(rng, 4, -1.0, 1.0);
        (
            vec![(vec![2, 3, 2], x)],
            Box::new(move |t, ids| {
                let y = t.max_axis(ids[0], 1)?;
                weighted_sum(t, y, &w)
            }),
        )
    });
    // softmax / log-sum-exp over a middle axis
    check_n(64, TRIALS, |rng| {
        let x = rand_vec(rng, 12, -2.0, 2.0);
        let w = rand_vec(rng, 12, -1.0, 1.0);
        (
            vec![(vec![2, 3, 2], x)],
            Box::new(move |t, ids| {
                let y = t.softmax(ids[0], 1)?;
                weighted_sum(t, y, &w)
            }),
        )
    });
    check_n(65, TRIALS, |rng| {
        let x = rand_vec(rng, 12, -2.0, 2.0);
        let w = rand_vec(rng, 4, -1.0, 1.0);
        (
            vec![(vec![2, 3, 2], x)],
            Box::new(move |t, ids| {
                let y = t.log_sum_exp(ids[0], 1)?;
                weighted_sum(t, y, &w)
            }),
        )
    });
    // layer norm over the trailing axis, all three parents
    check_n(66, TRIALS, |rng| {
        let x = rand_vec(rng, 8, -2.0, 2.0);
        let g = rand_vec(rng, 4, 0.5, 1.5);
        let b = rand_vec(rng, 4, -0.5, 0.5);
        let w = rand_vec(rng, 8, -1.0, 1.0);
        (
            vec![(vec![2, 4], x), (vec![4], g), (vec![4], b)],
            Box::new(move |t, ids| {
                let y = t.layer_norm(ids[0], ids[1], ids[2], 1e-6)?;
                weighted_sum(t, y, &w)
            }),
        )
    });
}

#[test]
fn fd_structure_ops() {
    check_n(71, TRIALS, |rng| {
        let x = rand_vec(rng, 12, -2.0, 2.0);
        let w = rand_vec(rng, 12, -1.0, 1.0);
        (
            vec![(vec![2, 3, 2], x)],
            Box::new(move |t, ids| {
                let p = t.permute(ids[0], &[2, 0, 1])?;
                let r = t.reshape(p, &[4, 3])?;
                weighted_sum(t, r, &w)
            }),
        )
    });
    check_n(72, TRIALS, |rng| {
        let x = rand_vec(rng, 3, -2.0, 2.0);
        let w = rand_vec(rng, 12, -1.0, 1.0);
        (
            vec![(vec![1, 3], x)],
            Box::new(move |t, ids| {
                let b = t.broadcast_to(ids[0], &[4, 3])?;
                weighted_sum(t, b, &w)
            }),
        )
    });
    check_n(73, TRIALS, |rng| {
        let a = rand_vec(rng, 4, -2.0, 2.0);
        let b = rand_vec(rng, 6, -2.0, 2.0);
        let w = rand_vec(rng, 6, -1.0, 1.0);
        (
            vec![(vec![2, 2], a), (vec![2, 3], b)],
            Box::new(move |t, ids| {
                let c = t.concat(&[ids[0], ids[1]], 1)?;
                let n = t.narrow(c, 1, 1, 3)?;
                weighted_sum(t, n, &w)
            }),
        )
    });
    check_n(74, TRIALS, |rng| {
        let x = rand_vec(rng, 8, -2.0, 2.0);
        let w = rand_vec(rng, 6, -1.0, 1.0);
        (
            vec![(vec![4, 2], x)],
            Box::new(move |t, ids| {
                let s = t.index_select(ids[0], 0, &[3, 1, 3])?;
                weighted_sum(t, s, &w)
            }),
        )
    });
}

#[test]
fn fd_composite_graph() {
    // A little network mixing most primitive families.
    check_n(81, 40, |rng| {
        let x = rand_vec(rng, 8, -2.0, 2.0);
        let w1 = rand_vec(rng, 12, -1.0, 1.0);
        let w2 = rand_vec(rng, 3, -1.0, 1.0);
        (
            vec![(vec![2, 4], x), (vec![4, 3], w1), (vec![3], w2)],
            Box::new(move |t, ids| {
                let h = t.matmul(ids[0], ids[1])?;
                let h = t.softplus(h);
                let h = t.add(h, ids[2])?;
                let sm = t.softmax(h, 1)?;
                let lse = t.log_sum_exp(sm, 1)?;
                let sq = t.mul(lse, lse)?;
                t.mean_all(sq)
            }),
        )
    });
}
