//! Forward-value and analytic-gradient checks for the tape primitives.

use scae_core::{Param, Tape};

fn tape() -> Tape<f64> {
    Tape::new()
}

fn leaf(t: &mut Tape<f64>, name: &str, shape: &[usize], data: Vec<f64>) -> scae_core::TensorId {
    t.leaf(name, &Param::new(shape.to_vec(), data))
}

#[test]
fn matmul_identity_returns_input() {
    let mut t = tape();
    let i3 = t.constant(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
    let a = t.constant(&[3, 3], vec![2., -1., 0.5, 3., 7., -2., 0., 4., 9.]).unwrap();
    let y = t.matmul(i3, a).unwrap();
    assert_eq!(t.value(y), t.value(a));
}

#[test]
fn matmul_rejects_inner_dim_mismatch() {
    let mut t = tape();
    let a = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let b = t.constant(&[2, 2], vec![0.0; 4]).unwrap();
    let err = t.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
}

#[test]
fn batched_matmul_broadcasts_leading_dims() {
    let mut t = tape();
    // a: [2,1,2,2] times b: [3,2,2] -> [2,3,2,2]
    let a = t.constant(&[2, 1, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
    let b = t.constant(&[3, 2, 2], (0..12).map(|v| 0.5 * v as f64).collect()).unwrap();
    let y = t.matmul(a, b).unwrap();
    assert_eq!(t.shape(y), &[2, 3, 2, 2]);
    // Spot-check block (1, 2): rows of a[1] times b[2].
    let got = &t.value(y)[(1 * 3 + 2) * 4..(1 * 3 + 2) * 4 + 4];
    let a1 = [4., 5., 6., 7.];
    let b2 = [4., 4.5, 5., 5.5];
    let want = [
        a1[0] * b2[0] + a1[1] * b2[2],
        a1[0] * b2[1] + a1[1] * b2[3],
        a1[2] * b2[0] + a1[3] * b2[2],
        a1[2] * b2[1] + a1[3] * b2[3],
    ];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut t = tape();
    let x = t.constant(&[2], vec![0.0, 0.0]).unwrap();
    let y = t.softmax(x, 0).unwrap();
    assert_eq!(t.value(y), &[0.5, 0.5]);
}

#[test]
fn softmax_sums_to_one_along_axis() {
    let mut t = tape();
    let x = t
        .constant(&[4, 5], (0..20).map(|i| ((i * 37) % 11) as f64 - 5.0).collect())
        .unwrap();
    let y = t.softmax(x, 1).unwrap();
    for r in 0..4 {
        let s: f64 = t.value(y)[r * 5..(r + 1) * 5].iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn gradient_of_sum_sigmoid_at_zero_is_quarter() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[4], vec![0.0; 4]);
    let s = t.sigmoid(x);
    let root = t.sum_all(s).unwrap();
    t.backward(root).unwrap();
    for &g in t.grad(x).unwrap() {
        assert!((g - 0.25).abs() < 1e-15);
    }
}

#[test]
fn product_rule_on_two_leaves() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[], vec![2.0]);
    let y = leaf(&mut t, "y", &[], vec![3.0]);
    let p = t.mul(x, y).unwrap();
    t.backward(p).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[3.0]);
    assert_eq!(t.grad(y).unwrap(), &[2.0]);
}

#[test]
fn log_sum_exp_gradient_is_softmax() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[3], vec![0.2, -1.0, 2.5]);
    let l = t.log_sum_exp(x, 0).unwrap();
    let sm = t.softmax(x, 0).unwrap();
    let expect = t.value(sm).to_vec();
    t.backward(l).unwrap();
    for (g, e) in t.grad(x).unwrap().iter().zip(expect) {
        assert!((g - e).abs() < 1e-12);
    }
}

#[test]
fn backward_requires_scalar_root() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[2], vec![1.0, 2.0]);
    let y = t.exp(x);
    let err = t.backward(y).unwrap_err().to_string();
    assert!(err.contains("scalar"), "{err}");
}

#[test]
fn second_backward_without_reset_is_rejected() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[], vec![1.0]);
    let y = t.exp(x);
    t.backward(y).unwrap();
    assert!(t.backward(y).is_err());
    t.zero_grads();
    t.backward(y).unwrap();
}

#[test]
fn grad_buffers_match_shapes_after_backward() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[2, 3], vec![0.1; 6]);
    let w = leaf(&mut t, "w", &[3, 4], vec![0.2; 12]);
    let y = t.matmul(x, w).unwrap();
    let s = t.sigmoid(y);
    let root = t.sum_all(s).unwrap();
    t.backward(root).unwrap();
    assert_eq!(t.grad(x).unwrap().len(), 6);
    assert_eq!(t.grad(w).unwrap().len(), 12);
    assert_eq!(t.grad(y).unwrap().len(), 8);
}

#[test]
fn stop_grad_blocks_upstream_flow() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[], vec![1.5]);
    let through = t.mul(x, x).unwrap();
    let blocked = t.stop_grad(through);
    let y = t.mul(blocked, x).unwrap(); // y = sg(x²)·x
    t.backward(y).unwrap();
    // Only the direct factor contributes: dy/dx = x² = 2.25.
    assert_eq!(t.grad(x).unwrap(), &[2.25]);
    assert_eq!(t.value(blocked), &[2.25]);
}

#[test]
fn shared_leaf_accumulates_from_every_use() {
    let p = Param::new(vec![1], vec![3.0]);
    let mut t = tape();
    let a = t.leaf("w", &p);
    let b = t.leaf("w", &p);
    assert_eq!(a, b);
    let s = t.add(a, b).unwrap(); // 2w
    let root = t.sum_all(s).unwrap();
    t.backward(root).unwrap();
    assert_eq!(t.grad(a).unwrap(), &[2.0]);
}

#[test]
fn concat_narrow_round_trip_and_grads() {
    let mut t = tape();
    let a = leaf(&mut t, "a", &[2, 2], vec![1., 2., 3., 4.]);
    let b = leaf(&mut t, "b", &[2, 1], vec![5., 6.]);
    let c = t.concat(&[a, b], 1).unwrap();
    assert_eq!(t.value(c), &[1., 2., 5., 3., 4., 6.]);
    let back = t.narrow(c, 1, 2, 1).unwrap();
    assert_eq!(t.value(back), &[5., 6.]);
    let doubled = t.mul_scalar(back, 2.0);
    let root = t.sum_all(doubled).unwrap();
    t.backward(root).unwrap();
    assert_eq!(t.grad(b).unwrap(), &[2.0, 2.0]);
    assert_eq!(t.grad(a).unwrap(), &[0.0; 4]);
}

#[test]
fn index_select_gathers_and_scatters() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[3, 2], vec![1., 2., 3., 4., 5., 6.]);
    let g = t.index_select(x, 0, &[2, 0, 2]).unwrap();
    assert_eq!(t.value(g), &[5., 6., 1., 2., 5., 6.]);
    let root = t.sum_all(g).unwrap();
    t.backward(root).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1., 1., 0., 0., 2., 2.]);
}

#[test]
fn max_axis_routes_gradient_to_first_argmax() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[2, 3], vec![1., 5., 5., 7., 2., 7.]);
    let m = t.max_axis(x, 1).unwrap();
    assert_eq!(t.value(m), &[5., 7.]);
    let root = t.sum_all(m).unwrap();
    t.backward(root).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0., 1., 0., 1., 0., 0.]);
}

#[test]
fn broadcast_add_reduces_gradient_correctly() {
    let mut t = tape();
    let x = leaf(&mut t, "x", &[2, 3], vec![0.0; 6]);
    let b = leaf(&mut t, "b", &[3], vec![0.0; 3]);
    let y = t.add(x, b).unwrap();
    let root = t.sum_all(y).unwrap();
    t.backward(root).unwrap();
    assert_eq!(t.grad(b).unwrap(), &[2.0, 2.0, 2.0]);
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut t = tape();
        let x = t.constant(&[8], (0..8).map(|i| (i as f64).sin()).collect()).unwrap();
        let e = t.exp(x);
        let s = t.softmax(e, 0).unwrap();
        let l = t.log_sum_exp(s, 0).unwrap();
        t.value(l).to_vec()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}
