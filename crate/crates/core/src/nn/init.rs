//! Deterministic weight initialization.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;

/// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub struct Init;

impl Init {
    pub fn conv_weight<R: Rng>(
        rng: &mut R,
        out_c: usize,
        in_c: usize,
        kh: usize,
        kw: usize,
    ) -> ArrayD<f64> {
        let bound = 1.0 / ((in_c * kh * kw) as f64).sqrt();
        Self::uniform(rng, &[out_c, in_c, kh, kw], bound)
    }

    pub fn linear_weight<R: Rng>(rng: &mut R, out_d: usize, in_d: usize) -> ArrayD<f64> {
        let bound = 1.0 / (in_d as f64).sqrt();
        Self::uniform(rng, &[out_d, in_d], bound)
    }

    pub fn uniform<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> ArrayD<f64> {
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        ArrayD::from_shape_vec(IxDyn(shape), v).unwrap()
    }

    pub fn zeros(shape: &[usize]) -> ArrayD<f64> {
        ArrayD::zeros(IxDyn(shape))
    }

    pub fn ones(shape: &[usize]) -> ArrayD<f64> {
        ArrayD::from_elem(IxDyn(shape), 1.0)
    }
}
