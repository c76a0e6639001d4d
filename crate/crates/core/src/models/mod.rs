//! Generator and discriminator networks.
//!
//! The generator maps `(x_t, t, z)` to a clean-image estimate bounded to
//! `[-1, 1]`. The discriminator is a strided convolutional trunk with two
//! heads: a global realism logit on the final feature map and a
//! foreground logit computed from mask-gated intermediate features.

mod discriminator;
mod embed;
mod generator;

pub use discriminator::{DiscConfig, DiscMode, DiscriminatorParams};
pub use embed::sinusoidal_embedding;
pub use generator::{GeneratorConfig, GeneratorParams};

use ndarray::{Array2, Array4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::AnomalyMask;

/// A batch of latent codes, shape `(B, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    data: Array2<f64>,
}

impl LatentCode {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("latent code".into()));
        }
        Ok(Self { data })
    }

    /// Draws `B×Z` unit Gaussian codes.
    pub fn sample<R: Rng>(rng: &mut R, batch: usize, z_dim: usize) -> Self {
        let v: Vec<f64> = (0..batch * z_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Self {
            data: Array2::from_shape_vec((batch, z_dim), v).unwrap(),
        }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// `(B, Z)`.
    pub fn dims(&self) -> (usize, usize) {
        self.data.dim()
    }
}

/// Nearest-neighbor mask resampling to an arbitrary target resolution.
///
/// Source index along each axis is `floor(dst * src_len / dst_len)`, so the
/// output stays strictly binary by construction.
pub fn resample_mask(m: &AnomalyMask, target_h: usize, target_w: usize) -> Result<AnomalyMask> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Param(format!(
            "mask resample target must be at least 1x1, got {target_h}x{target_w}"
        )));
    }
    let (b, _, h, w) = m.dims();
    if (h, w) == (target_h, target_w) {
        return Ok(m.clone());
    }
    let src = m.data();
    let mut out = Array4::zeros((b, 1, target_h, target_w));
    for bi in 0..b {
        for y in 0..target_h {
            let sy = y * h / target_h;
            for x in 0..target_w {
                let sx = x * w / target_w;
                out[[bi, 0, y, x]] = src[[bi, 0, sy, sx]];
            }
        }
    }
    AnomalyMask::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn resample_identity_dims_is_a_noop() {
        let m = AnomalyMask::new(array![[[[1.0, 0.0], [0.0, 1.0]]]]).unwrap();
        let r = resample_mask(&m, 2, 2).unwrap();
        assert_eq!(r, m);
    }

    #[test]
    fn resample_upscales_blocks() {
        let m = AnomalyMask::new(array![[[[1.0, 0.0], [0.0, 0.0]]]]).unwrap();
        let r = resample_mask(&m, 4, 4).unwrap();
        let want: Array4<f64> = array![[[
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0]
        ]]];
        assert_eq!(r.data(), &want);
    }

    #[test]
    fn resample_downscale_picks_nearest_source_pixels() {
        // 4x4 checkerboard with m[y][x] = (x + y) % 2
        let mut base = Array4::<f64>::zeros((1, 1, 4, 4));
        for y in 0..4 {
            for x in 0..4 {
                base[[0, 0, y, x]] = ((x + y) % 2) as f64;
            }
        }
        let m = AnomalyMask::new(base.clone()).unwrap();
        let r = resample_mask(&m, 2, 2).unwrap();
        // Enumerated index map: dst (y, x) reads src (2y, 2x).
        for y in 0..2 {
            for x in 0..2 {
                let v = r.data()[[0, 0, y, x]];
                assert_eq!(v, base[[0, 0, 2 * y, 2 * x]]);
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }

    #[test]
    fn resample_rejects_empty_targets() {
        let m = AnomalyMask::zeros(1, 4, 4);
        assert!(resample_mask(&m, 0, 4).is_err());
    }

    #[test]
    fn resample_preserves_binarity_across_sizes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        for _ in 0..50 {
            let h = rng.random_range(1..20usize);
            let w = rng.random_range(1..20usize);
            let mut a = Array4::<f64>::zeros((1, 1, 8, 8));
            for v in a.iter_mut() {
                *v = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            }
            let m = AnomalyMask::new(a).unwrap();
            let r = resample_mask(&m, h, w).unwrap();
            assert!(r.data().iter().all(|v| *v == 0.0 || *v == 1.0));
        }
    }
}
