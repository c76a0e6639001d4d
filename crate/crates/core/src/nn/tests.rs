use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::*;

fn rand_arr(rng: &mut ChaCha12Rng, shape: &[usize], lo: f64, hi: f64) -> ArrayD<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), v).unwrap()
}

/// Gradcheck harness: builds a scalar-valued graph from a single variable
/// input and compares backward against central differences.
fn check_op(
    seed: u64,
    shape: &[usize],
    build: impl Fn(&mut Graph, NodeId) -> NodeId,
) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Offset away from zero so kinked activations are not probed at the kink.
    let x0 = rand_arr(&mut rng, shape, 0.1, 1.2);

    let mut g = Graph::new();
    let x = g.leaf(x0.clone(), true);
    let y = build(&mut g, x);
    let root = g.mean_all(y);
    let grads = g.backward(root);
    let analytic = grads.get(x).expect("input must receive a gradient").clone();

    let mut f = |probe: &ArrayD<f64>| {
        let mut g = Graph::new();
        let x = g.leaf(probe.clone(), false);
        let y = build(&mut g, x);
        let root = g.mean_all(y);
        g.scalar_value(root)
    };
    let numeric = central_diff_grad(&mut f, &x0, 1e-5);
    assert!(
        grads_close(&analytic, &numeric, 1e-6),
        "gradcheck failed: max rel err {}",
        max_rel_err(&analytic, &numeric)
    );
}

#[test]
fn gradcheck_elementwise_ops() {
    check_op(1, &[2, 3], |g, x| g.silu(x));
    check_op(2, &[2, 3], |g, x| g.tanh(x));
    check_op(3, &[2, 3], |g, x| g.softplus(x));
    check_op(4, &[2, 3], |g, x| g.leaky_relu(x, 0.2));
    check_op(5, &[2, 3], |g, x| g.scale(x, -1.7));
    check_op(6, &[2, 3], |g, x| g.add_scalar(x, 0.3));
    check_op(7, &[2, 3], |g, x| g.mul(x, x));
}

#[test]
fn gradcheck_binary_broadcast() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let other = rand_arr(&mut rng, &[1, 3, 1, 1], -1.0, 1.0);
    check_op(12, &[2, 3, 4, 4], move |g, x| {
        let c = g.constant(other.clone());
        let s = g.add(x, c);
        g.mul(s, c)
    });
}

#[test]
fn gradcheck_reductions_and_reshape() {
    check_op(21, &[2, 3, 4, 4], |g, x| g.spatial_mean(x));
    check_op(22, &[3, 5], |g, x| g.sum_per_sample(x));
    check_op(23, &[2, 8], |g, x| g.reshape(x, &[2, 2, 2, 2]));
    check_op(24, &[2, 2, 4, 4], |g, x| g.upsample_nearest2(x));
    check_op(25, &[2, 2, 2, 2], |g, x| {
        let y = g.concat_channels(x, x);
        g.mul(y, y)
    });
}

#[test]
fn gradcheck_linear() {
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let w0 = rand_arr(&mut rng, &[4, 3], -0.7, 0.7);
    let b0 = rand_arr(&mut rng, &[4], -0.5, 0.5);
    // wrt input
    let (w1, b1) = (w0.clone(), b0.clone());
    check_op(32, &[2, 3], move |g, x| {
        let w = g.constant(w1.clone());
        let b = g.constant(b1.clone());
        let y = g.linear(x, w, Some(b));
        g.silu(y)
    });
    // wrt weight
    let x0 = rand_arr(&mut rng, &[2, 3], -1.0, 1.0);
    let (x1, b1) = (x0.clone(), b0.clone());
    check_op(33, &[4, 3], move |g, w| {
        let x = g.constant(x1.clone());
        let b = g.constant(b1.clone());
        let y = g.linear(x, w, Some(b));
        g.silu(y)
    });
    // wrt bias
    check_op(34, &[4], move |g, b| {
        let x = g.constant(x0.clone());
        let w = g.constant(w0.clone());
        let y = g.linear(x, w, Some(b));
        g.silu(y)
    });
}

#[test]
fn gradcheck_conv2d() {
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    for &(stride, pad) in &[(1usize, 1usize), (2, 1)] {
        let w0 = rand_arr(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
        let b0 = rand_arr(&mut rng, &[3], -0.2, 0.2);
        let x0 = rand_arr(&mut rng, &[2, 2, 6, 6], -1.0, 1.0);
        // wrt input
        let (wc, bc) = (w0.clone(), b0.clone());
        check_op(42 + stride as u64, &[2, 2, 6, 6], move |g, x| {
            let w = g.constant(wc.clone());
            let b = g.constant(bc.clone());
            let y = g.conv2d(x, w, Some(b), stride, pad);
            g.tanh(y)
        });
        // wrt weight
        let (xc, bc) = (x0.clone(), b0.clone());
        check_op(44 + stride as u64, &[3, 2, 3, 3], move |g, w| {
            let x = g.constant(xc.clone());
            let b = g.constant(bc.clone());
            let y = g.conv2d(x, w, Some(b), stride, pad);
            g.tanh(y)
        });
        // wrt bias
        let (xc, wc) = (x0.clone(), w0.clone());
        check_op(46 + stride as u64, &[3], move |g, b| {
            let x = g.constant(xc.clone());
            let w = g.constant(wc.clone());
            let y = g.conv2d(x, w, Some(b), stride, pad);
            g.tanh(y)
        });
    }
}

#[test]
fn gradcheck_group_norm() {
    let mut rng = ChaCha12Rng::seed_from_u64(51);
    let gamma0 = rand_arr(&mut rng, &[4], 0.5, 1.5);
    let beta0 = rand_arr(&mut rng, &[4], -0.3, 0.3);
    let x0 = rand_arr(&mut rng, &[2, 4, 3, 3], -1.0, 1.0);
    // wrt input
    let (gc, bc) = (gamma0.clone(), beta0.clone());
    check_op(52, &[2, 4, 3, 3], move |g, x| {
        let ga = g.constant(gc.clone());
        let be = g.constant(bc.clone());
        let y = g.group_norm(x, ga, be, 2, 1e-5);
        g.silu(y)
    });
    // wrt gamma
    let (xc, bc) = (x0.clone(), beta0.clone());
    check_op(53, &[4], move |g, ga| {
        let x = g.constant(xc.clone());
        let be = g.constant(bc.clone());
        let y = g.group_norm(x, ga, be, 2, 1e-5);
        g.silu(y)
    });
    // wrt beta
    check_op(54, &[4], move |g, be| {
        let x = g.constant(x0.clone());
        let ga = g.constant(gamma0.clone());
        let y = g.group_norm(x, ga, be, 2, 1e-5);
        g.silu(y)
    });
}

#[test]
fn backward_accumulates_shared_nodes() {
    // y = x * x => dy/dx = 2x via two contributions to the same parent
    let mut g = Graph::new();
    let x = g.leaf(ArrayD::from_elem(IxDyn(&[1]), 3.0), true);
    let y = g.mul(x, x);
    let root = g.sum_all(y);
    let grads = g.backward(root);
    assert_eq!(grads.get(x).unwrap()[[0]], 6.0);
}

#[test]
fn backward_skips_constant_branches() {
    let mut g = Graph::new();
    let x = g.leaf(ArrayD::from_elem(IxDyn(&[2]), 1.0), true);
    let c = g.constant(ArrayD::from_elem(IxDyn(&[2]), 5.0));
    let y = g.add(x, c);
    let root = g.sum_all(y);
    let grads = g.backward(root);
    assert!(grads.get(c).is_none());
    assert!(grads.get(x).is_some());
}

#[test]
fn backward_is_bit_deterministic() {
    let mut rng = ChaCha12Rng::seed_from_u64(61);
    let x0 = rand_arr(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
    let w0 = rand_arr(&mut rng, &[4, 3, 3, 3], -0.5, 0.5);
    let run = || {
        let mut g = Graph::new();
        let x = g.leaf(x0.clone(), true);
        let w = g.leaf(w0.clone(), true);
        let y = g.conv2d(x, w, None, 1, 1);
        let a = g.leaky_relu(y, 0.2);
        let root = g.mean_all(a);
        let grads = g.backward(root);
        (grads.get(x).unwrap().clone(), grads.get(w).unwrap().clone())
    };
    let (dx1, dw1) = run();
    let (dx2, dw2) = run();
    assert_eq!(dx1, dx2);
    assert_eq!(dw1, dw2);
}
