//! im2col convolution kernels.
//!
//! Each batch element is lowered to a column matrix and handled with one
//! matrix product; batch elements run in parallel. All reductions happen
//! in a fixed order so results do not depend on thread scheduling.

use ndarray::{Array2, ArrayD, IxDyn};
use rayon::prelude::*;

use super::ops::dims4;

/// Output extent of a convolution along one axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    assert!(
        input + 2 * pad >= kernel,
        "kernel {kernel} larger than padded input {input}+2*{pad}"
    );
    (input + 2 * pad - kernel) / stride + 1
}

/// Lower one image `C×H×W` into columns `(C·kh·kw) × (Ho·Wo)`.
fn im2col(
    x: &ArrayD<f64>,
    b: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Array2<f64> {
    let (_, c, h, w) = dims4(x);
    let mut cols = Array2::<f64>::zeros((c * kh * kw, ho * wo));
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cols[[row, oy * wo + ox]] = x[[b, ci, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter columns back into an image, accumulating overlaps.
fn col2im_accumulate(
    cols: &Array2<f64>,
    out: &mut ndarray::ArrayViewMutD<'_, f64>,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) {
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out[[ci, iy as usize, ix as usize]] += cols[[row, oy * wo + ox]];
                    }
                }
            }
        }
    }
}

/// Forward convolution of `B×C×H×W` with `O×C×kh×kw`, optional bias `O`.
pub fn conv2d_forward(
    x: &ArrayD<f64>,
    w: &ArrayD<f64>,
    bias: Option<&ArrayD<f64>>,
    stride: usize,
    pad: usize,
) -> ArrayD<f64> {
    let (bsz, c, h, ww) = dims4(x);
    let (o, cw, kh, kw) = dims4(w);
    assert_eq!(c, cw, "conv input channels {c} vs kernel channels {cw}");
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(ww, kw, stride, pad);

    let wmat = w
        .view()
        .into_shape_with_order((o, c * kh * kw))
        .unwrap()
        .to_owned();

    let per_batch: Vec<Array2<f64>> = (0..bsz)
        .into_par_iter()
        .map(|b| {
            let cols = im2col(x, b, kh, kw, stride, pad, ho, wo);
            wmat.dot(&cols)
        })
        .collect();

    let mut out = ArrayD::zeros(IxDyn(&[bsz, o, ho, wo]));
    for (b, y) in per_batch.into_iter().enumerate() {
        let mut slot = out.index_axis_mut(ndarray::Axis(0), b);
        slot.assign(
            &y.into_shape_with_order((o, ho, wo))
                .unwrap()
                .into_dyn(),
        );
    }
    if let Some(bv) = bias {
        assert_eq!(bv.len(), o);
        for bi in 0..bsz {
            for oi in 0..o {
                let add = bv[[oi]];
                for yy in 0..ho {
                    for xx in 0..wo {
                        out[[bi, oi, yy, xx]] += add;
                    }
                }
            }
        }
    }
    out
}

/// Gradient with respect to the convolution input.
pub fn conv2d_backward_input(
    dy: &ArrayD<f64>,
    w: &ArrayD<f64>,
    x_shape: &[usize],
    stride: usize,
    pad: usize,
) -> ArrayD<f64> {
    let (bsz, o, ho, wo) = dims4(dy);
    let (ow, c, kh, kw) = dims4(w);
    assert_eq!(o, ow);
    let (h, ww) = (x_shape[2], x_shape[3]);
    let wmat_t = w
        .view()
        .into_shape_with_order((o, c * kh * kw))
        .unwrap()
        .t()
        .to_owned();

    let per_batch: Vec<Array2<f64>> = (0..bsz)
        .into_par_iter()
        .map(|b| {
            let dyb = dy
                .index_axis(ndarray::Axis(0), b)
                .into_shape_with_order((o, ho * wo))
                .unwrap()
                .to_owned();
            wmat_t.dot(&dyb)
        })
        .collect();

    let mut dx = ArrayD::zeros(IxDyn(x_shape));
    for (b, cols) in per_batch.into_iter().enumerate() {
        let mut slot = dx.index_axis_mut(ndarray::Axis(0), b);
        col2im_accumulate(&cols, &mut slot, c, h, ww, kh, kw, stride, pad, ho, wo);
    }
    dx
}

/// Gradient with respect to the convolution kernel.
pub fn conv2d_backward_weight(
    dy: &ArrayD<f64>,
    x: &ArrayD<f64>,
    w_shape: &[usize],
    stride: usize,
    pad: usize,
) -> ArrayD<f64> {
    let (bsz, o, ho, wo) = dims4(dy);
    let (_, c, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);

    let partials: Vec<Array2<f64>> = (0..bsz)
        .into_par_iter()
        .map(|b| {
            let cols = im2col(x, b, kh, kw, stride, pad, ho, wo);
            let dyb = dy
                .index_axis(ndarray::Axis(0), b)
                .into_shape_with_order((o, ho * wo))
                .unwrap()
                .to_owned();
            dyb.dot(&cols.t())
        })
        .collect();

    // Fixed-order reduction keeps the result independent of scheduling.
    let mut acc = Array2::<f64>::zeros((o, c * kh * kw));
    for p in partials {
        acc += &p;
    }
    acc.into_shape_with_order(IxDyn(w_shape)).unwrap()
}

/// Gradient with respect to the convolution bias.
pub fn conv2d_backward_bias(dy: &ArrayD<f64>) -> ArrayD<f64> {
    let (bsz, o, ho, wo) = dims4(dy);
    let mut db = ArrayD::zeros(IxDyn(&[o]));
    for b in 0..bsz {
        for oi in 0..o {
            let mut s = 0.0;
            for y in 0..ho {
                for x in 0..wo {
                    s += dy[[b, oi, y, x]];
                }
            }
            db[[oi]] += s;
        }
    }
    db
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rand_arr(rng: &mut ChaCha12Rng, shape: &[usize]) -> ArrayD<f64> {
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        ArrayD::from_shape_vec(IxDyn(shape), v).unwrap()
    }

    /// Direct nested-loop convolution used as the reference.
    fn conv_naive(
        x: &ArrayD<f64>,
        w: &ArrayD<f64>,
        bias: Option<&ArrayD<f64>>,
        stride: usize,
        pad: usize,
    ) -> ArrayD<f64> {
        let (bsz, c, h, ww) = dims4(x);
        let (o, _, kh, kw) = dims4(w);
        let ho = conv_out_dim(h, kh, stride, pad);
        let wo = conv_out_dim(ww, kw, stride, pad);
        let mut out = ArrayD::zeros(IxDyn(&[bsz, o, ho, wo]));
        for b in 0..bsz {
            for oi in 0..o {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = bias.map(|bv| bv[[oi]]).unwrap_or(0.0);
                        for ci in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < ww as isize {
                                        s += x[[b, ci, iy as usize, ix as usize]]
                                            * w[[oi, ci, ky as usize, kx as usize]];
                                    }
                                }
                            }
                        }
                        out[[b, oi, oy, ox]] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive_convolution() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for &(stride, pad) in &[(1usize, 1usize), (2, 1), (1, 0), (2, 0)] {
            let x = rand_arr(&mut rng, &[2, 3, 8, 7]);
            let w = rand_arr(&mut rng, &[4, 3, 3, 3]);
            let b = rand_arr(&mut rng, &[4]);
            let got = conv2d_forward(&x, &w, Some(&b), stride, pad);
            let want = conv_naive(&x, &w, Some(&b), stride, pad);
            assert_eq!(got.shape(), want.shape());
            for (a, e) in got.iter().zip(want.iter()) {
                assert!((a - e).abs() < 1e-12, "stride={stride} pad={pad}");
            }
        }
    }

    #[test]
    fn forward_is_deterministic_across_calls() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = rand_arr(&mut rng, &[4, 3, 16, 16]);
        let w = rand_arr(&mut rng, &[8, 3, 3, 3]);
        let a = conv2d_forward(&x, &w, None, 1, 1);
        let b = conv2d_forward(&x, &w, None, 1, 1);
        assert_eq!(a, b);
    }
}
