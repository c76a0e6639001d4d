//! Graph operations: elementwise math, reductions, reshapes, linear and
//! convolutional layers, and group normalization.

use ndarray::{concatenate, ArrayD, Axis, IxDyn};

use super::conv;
use super::{broadcast_shape, reduce_to_shape, Graph, NodeId};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Overflow-safe softplus `log(1 + e^x)`.
pub fn softplus_scalar(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Graph {
    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        forward: impl Fn(&ArrayD<f64>, &ArrayD<f64>) -> ArrayD<f64>,
        backward: impl Fn(&Graph, &ArrayD<f64>) -> (ArrayD<f64>, ArrayD<f64>) + 'static,
    ) -> NodeId {
        let value = forward(self.value(a), self.value(b));
        let needs = self.any_needs_grad(&[a, b]);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let (da, db) = backward(g, up);
            vec![
                (a, reduce_to_shape(da, g.value(a).shape())),
                (b, reduce_to_shape(db, g.value(b).shape())),
            ]
        };
        self.push(value, needs, Some(Box::new(back)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(
            a,
            b,
            |va, vb| {
                let shape = broadcast_shape(va.shape(), vb.shape());
                &va.broadcast(IxDyn(&shape)).unwrap() + &vb.broadcast(IxDyn(&shape)).unwrap()
            },
            |_, up| (up.clone(), up.clone()),
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(
            a,
            b,
            |va, vb| {
                let shape = broadcast_shape(va.shape(), vb.shape());
                &va.broadcast(IxDyn(&shape)).unwrap() - &vb.broadcast(IxDyn(&shape)).unwrap()
            },
            |_, up| (up.clone(), -up),
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(
            a,
            b,
            |va, vb| {
                let shape = broadcast_shape(va.shape(), vb.shape());
                &va.broadcast(IxDyn(&shape)).unwrap() * &vb.broadcast(IxDyn(&shape)).unwrap()
            },
            move |g, up| {
                let va = g.value(a);
                let vb = g.value(b);
                let shape = broadcast_shape(va.shape(), vb.shape());
                let da = up * &vb.broadcast(IxDyn(&shape)).unwrap();
                let db = up * &va.broadcast(IxDyn(&shape)).unwrap();
                (da, db)
            },
        )
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let value = self.value(a) * k;
        let needs = self.needs_grad(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |_, up| vec![(a, up * k)])),
        )
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> NodeId {
        let value = self.value(a) + k;
        let needs = self.needs_grad(a);
        self.push(
            value,
            needs,
            Some(Box::new(move |_, up| vec![(a, up.clone())])),
        )
    }

    fn unary(
        &mut self,
        a: NodeId,
        forward: impl Fn(f64) -> f64,
        // derivative as a function of the input value
        derivative: impl Fn(f64) -> f64 + 'static,
    ) -> NodeId {
        let value = self.value(a).mapv(forward);
        let needs = self.needs_grad(a);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let d = g.value(a).mapv(|x| derivative(x));
            vec![(a, up * &d)]
        };
        self.push(value, needs, Some(Box::new(back)))
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        self.unary(
            a,
            |x| x * sigmoid(x),
            |x| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        self.unary(
            a,
            move |x| if x > 0.0 { x } else { slope * x },
            move |x| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, |x| {
            let t = x.tanh();
            1.0 - t * t
        })
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, softplus_scalar, sigmoid)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let value = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape must preserve element count");
        let needs = self.needs_grad(a);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let orig = g.value(a).raw_dim();
            vec![(a, up.clone().into_shape_with_order(orig).unwrap())]
        };
        self.push(value, needs, Some(Box::new(back)))
    }

    /// Concatenation along the channel axis of `B×C×H×W` tensors.
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let va = self.value(a);
        let vb = self.value(b);
        debug_assert_eq!(va.ndim(), 4);
        debug_assert_eq!(vb.ndim(), 4);
        let ca = va.shape()[1];
        let value = concatenate(Axis(1), &[va.view(), vb.view()]).unwrap();
        let needs = self.any_needs_grad(&[a, b]);
        let back = move |_: &Graph, up: &ArrayD<f64>| {
            let da = up.slice_axis(Axis(1), (0..ca).into()).to_owned();
            let db = up.slice_axis(Axis(1), (ca..up.shape()[1]).into()).to_owned();
            vec![(a, da), (b, db)]
        };
        self.push(value, needs, Some(Box::new(back)))
    }

    /// Nearest-neighbor 2x spatial upsampling of a `B×C×H×W` tensor.
    pub fn upsample_nearest2(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let (bsz, c, h, w) = dims4(v);
        let mut out = ArrayD::zeros(IxDyn(&[bsz, c, 2 * h, 2 * w]));
        for bi in 0..bsz {
            for ci in 0..c {
                for y in 0..2 * h {
                    for x in 0..2 * w {
                        out[[bi, ci, y, x]] = v[[bi, ci, y / 2, x / 2]];
                    }
                }
            }
        }
        let needs = self.needs_grad(a);
        let back = move |_: &Graph, up: &ArrayD<f64>| {
            let (bsz, c, h2, w2) = dims4(up);
            let mut da = ArrayD::zeros(IxDyn(&[bsz, c, h2 / 2, w2 / 2]));
            for bi in 0..bsz {
                for ci in 0..c {
                    for y in 0..h2 {
                        for x in 0..w2 {
                            da[[bi, ci, y / 2, x / 2]] += up[[bi, ci, y, x]];
                        }
                    }
                }
            }
            vec![(a, da)]
        };
        self.push(out, needs, Some(Box::new(back)))
    }

    /// Mean over the spatial axes: `B×C×H×W -> B×C`.
    pub fn spatial_mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let (bsz, c, h, w) = dims4(v);
        let mut out = ArrayD::zeros(IxDyn(&[bsz, c]));
        for bi in 0..bsz {
            for ci in 0..c {
                let mut s = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        s += v[[bi, ci, y, x]];
                    }
                }
                out[[bi, ci]] = s / (h * w) as f64;
            }
        }
        let needs = self.needs_grad(a);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let (bsz, c, h, w) = dims4(g.value(a));
            let mut da = ArrayD::zeros(IxDyn(&[bsz, c, h, w]));
            let inv = 1.0 / (h * w) as f64;
            for bi in 0..bsz {
                for ci in 0..c {
                    let u = up[[bi, ci]] * inv;
                    for y in 0..h {
                        for x in 0..w {
                            da[[bi, ci, y, x]] = u;
                        }
                    }
                }
            }
            vec![(a, da)]
        };
        self.push(out, needs, Some(Box::new(back)))
    }

    /// Sum over every axis except the batch axis: `B×... -> B`.
    pub fn sum_per_sample(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let bsz = v.shape()[0];
        let per = v.len() / bsz;
        let flat = v.view().into_shape_with_order(IxDyn(&[bsz, per])).unwrap();
        let out = flat.sum_axis(Axis(1));
        let needs = self.needs_grad(a);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let shape = g.value(a).raw_dim();
            let bsz = shape[0];
            let mut da = ArrayD::zeros(shape.clone());
            let mut flat = da
                .view_mut()
                .into_shape_with_order(IxDyn(&[bsz, g.value(a).len() / bsz]))
                .unwrap();
            for bi in 0..bsz {
                flat.index_axis_mut(Axis(0), bi).fill(up[[bi]]);
            }
            vec![(a, da)]
        };
        self.push(out.into_dyn(), needs, Some(Box::new(back)))
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let value = ArrayD::from_elem(IxDyn(&[1]), self.value(a).sum() / n);
        let needs = self.needs_grad(a);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let shape = g.value(a).raw_dim();
            let n = g.value(a).len() as f64;
            vec![(a, ArrayD::from_elem(shape, up[[0]] / n))]
        };
        self.push(value, needs, Some(Box::new(back)))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = ArrayD::from_elem(IxDyn(&[1]), self.value(a).sum());
        let needs = self.needs_grad(a);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let shape = g.value(a).raw_dim();
            vec![(a, ArrayD::from_elem(shape, up[[0]]))]
        };
        self.push(value, needs, Some(Box::new(back)))
    }

    /// Fully connected layer: `x (B×I) · w^T (I×O) + b -> B×O`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        let vx = as2(self.value(x));
        let vw = as2(self.value(w));
        let mut out = vx.dot(&vw.t());
        if let Some(bid) = b {
            let vb = self.value(bid);
            out += &vb.view().into_shape_with_order(IxDyn(&[1, vb.len()])).unwrap();
        }
        let mut parents = vec![x, w];
        if let Some(bid) = b {
            parents.push(bid);
        }
        let needs = self.any_needs_grad(&parents);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let u = as2(up);
            let mut contribs = Vec::new();
            if g.needs_grad(x) {
                let vw = as2(g.value(w));
                contribs.push((x, u.dot(&vw).into_dyn()));
            }
            if g.needs_grad(w) {
                let vx = as2(g.value(x));
                contribs.push((w, u.t().dot(&vx).into_dyn()));
            }
            if let Some(bid) = b {
                if g.needs_grad(bid) {
                    contribs.push((bid, u.sum_axis(Axis(0)).into_dyn()));
                }
            }
            contribs
        };
        self.push(out.into_dyn(), needs, Some(Box::new(back)))
    }

    /// 2-D convolution over `B×C×H×W` with kernel `O×C×kh×kw`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let value = conv::conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|bid| self.value(bid)),
            stride,
            pad,
        );
        let mut parents = vec![x, w];
        if let Some(bid) = b {
            parents.push(bid);
        }
        let needs = self.any_needs_grad(&parents);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let mut contribs = Vec::new();
            if g.needs_grad(x) {
                contribs.push((
                    x,
                    conv::conv2d_backward_input(up, g.value(w), g.value(x).shape(), stride, pad),
                ));
            }
            if g.needs_grad(w) {
                contribs.push((
                    w,
                    conv::conv2d_backward_weight(up, g.value(x), g.value(w).shape(), stride, pad),
                ));
            }
            if let Some(bid) = b {
                if g.needs_grad(bid) {
                    contribs.push((bid, conv::conv2d_backward_bias(up)));
                }
            }
            contribs
        };
        self.push(value, needs, Some(Box::new(back)))
    }

    /// Group normalization with per-channel scale and shift.
    ///
    /// `x` is `B×C×H×W`; `gamma`/`beta` are length-`C`. Statistics are
    /// computed per `(sample, group)` over the group's channels and all
    /// spatial positions.
    pub fn group_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        eps: f64,
    ) -> NodeId {
        let v = self.value(x);
        let (bsz, c, h, w) = dims4(v);
        assert!(c % groups == 0, "channels {c} not divisible by groups {groups}");
        let cg = c / groups;
        let m = (cg * h * w) as f64;

        // Per-(sample, group) mean and inverse stddev.
        let mut mean = vec![0.0; bsz * groups];
        let mut inv_std = vec![0.0; bsz * groups];
        for bi in 0..bsz {
            for gi in 0..groups {
                let mut s = 0.0;
                let mut s2 = 0.0;
                for ci in gi * cg..(gi + 1) * cg {
                    for y in 0..h {
                        for xx in 0..w {
                            let val = v[[bi, ci, y, xx]];
                            s += val;
                            s2 += val * val;
                        }
                    }
                }
                let mu = s / m;
                let var = (s2 / m - mu * mu).max(0.0);
                mean[bi * groups + gi] = mu;
                inv_std[bi * groups + gi] = 1.0 / (var + eps).sqrt();
            }
        }

        let vg = self.value(gamma);
        let vb = self.value(beta);
        let mut out = ArrayD::zeros(v.raw_dim());
        for bi in 0..bsz {
            for ci in 0..c {
                let gi = ci / cg;
                let mu = mean[bi * groups + gi];
                let is = inv_std[bi * groups + gi];
                let ga = vg[[ci]];
                let be = vb[[ci]];
                for y in 0..h {
                    for xx in 0..w {
                        out[[bi, ci, y, xx]] = (v[[bi, ci, y, xx]] - mu) * is * ga + be;
                    }
                }
            }
        }

        let needs = self.any_needs_grad(&[x, gamma, beta]);
        let back = move |g: &Graph, up: &ArrayD<f64>| {
            let v = g.value(x);
            let (bsz, c, h, w) = dims4(v);
            let cg = c / groups;
            let m = (cg * h * w) as f64;
            let vg = g.value(gamma);

            let mut dx = ArrayD::zeros(v.raw_dim());
            let mut dgamma = ArrayD::zeros(IxDyn(&[c]));
            let mut dbeta = ArrayD::zeros(IxDyn(&[c]));

            for bi in 0..bsz {
                for gi in 0..groups {
                    // Recompute group statistics.
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for ci in gi * cg..(gi + 1) * cg {
                        for y in 0..h {
                            for xx in 0..w {
                                let val = v[[bi, ci, y, xx]];
                                s += val;
                                s2 += val * val;
                            }
                        }
                    }
                    let mu = s / m;
                    let var = (s2 / m - mu * mu).max(0.0);
                    let is = 1.0 / (var + eps).sqrt();

                    // dxhat = up * gamma; accumulate its group means.
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for ci in gi * cg..(gi + 1) * cg {
                        let ga = vg[[ci]];
                        for y in 0..h {
                            for xx in 0..w {
                                let xhat = (v[[bi, ci, y, xx]] - mu) * is;
                                let dxhat = up[[bi, ci, y, xx]] * ga;
                                sum_dxhat += dxhat;
                                sum_dxhat_xhat += dxhat * xhat;
                                dgamma[[ci]] += up[[bi, ci, y, xx]] * xhat;
                                dbeta[[ci]] += up[[bi, ci, y, xx]];
                            }
                        }
                    }
                    let mean_dxhat = sum_dxhat / m;
                    let mean_dxhat_xhat = sum_dxhat_xhat / m;
                    for ci in gi * cg..(gi + 1) * cg {
                        let ga = vg[[ci]];
                        for y in 0..h {
                            for xx in 0..w {
                                let xhat = (v[[bi, ci, y, xx]] - mu) * is;
                                let dxhat = up[[bi, ci, y, xx]] * ga;
                                dx[[bi, ci, y, xx]] =
                                    is * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                            }
                        }
                    }
                }
            }
            vec![(x, dx), (gamma, dgamma), (beta, dbeta)]
        };
        self.push(out, needs, Some(Box::new(back)))
    }
}

pub(crate) fn dims4(v: &ArrayD<f64>) -> (usize, usize, usize, usize) {
    debug_assert_eq!(v.ndim(), 4);
    (v.shape()[0], v.shape()[1], v.shape()[2], v.shape()[3])
}

fn as2(v: &ArrayD<f64>) -> ndarray::ArrayView2<'_, f64> {
    v.view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("expected a rank-2 tensor")
}
