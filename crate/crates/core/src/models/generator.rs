//! U-shaped clean-image generator.
//!
//! The network consumes a noisy image, a timestep, and a latent code, and
//! predicts the clean image directly. The latent and timestep are merged
//! into one conditioning vector that is injected additively (as per-channel
//! biases) into the bottleneck and every decoder block. A final tanh bounds
//! the output to `[-1, 1]`.

use ndarray::{Array2, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBatch;
use crate::models::{sinusoidal_embedding, LatentCode};
use crate::nn::{Graph, Init, NodeId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    /// Channel width at the shallowest level; deeper levels double it.
    pub base_channels: usize,
    /// Number of resolution levels; `depth - 1` downsamplings.
    pub depth: usize,
    pub z_dim: usize,
    pub temb_dim: usize,
    pub cond_dim: usize,
    pub groups: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            in_channels: 3,
            base_channels: 64,
            depth: 3,
            z_dim: 100,
            temb_dim: 128,
            cond_dim: 128,
            groups: 8,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Param("generator depth must be at least 2".into()));
        }
        if self.temb_dim < 2 || self.temb_dim % 2 != 0 {
            return Err(Error::Param("temb_dim must be even and >= 2".into()));
        }
        for level in 0..self.depth {
            let ch = self.base_channels << level;
            if ch % self.groups != 0 {
                return Err(Error::Param(format!(
                    "channels {ch} at level {level} not divisible by groups {}",
                    self.groups
                )));
            }
        }
        Ok(())
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial divisibility demanded of inputs.
    pub fn spatial_multiple(&self) -> usize {
        1 << (self.depth - 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvIdx {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormIdx {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
struct GenLayout {
    z_proj: ConvIdx,
    cond: ConvIdx,
    stem: ConvIdx,
    enc_conv: Vec<ConvIdx>,
    enc_norm: Vec<NormIdx>,
    down: Vec<ConvIdx>,
    mid_conv: [ConvIdx; 2],
    mid_norm: [NormIdx; 2],
    mid_cond: [ConvIdx; 2],
    up_conv_a: Vec<ConvIdx>,
    up_norm_a: Vec<NormIdx>,
    up_cond: Vec<ConvIdx>,
    up_conv_b: Vec<ConvIdx>,
    up_norm_b: Vec<NormIdx>,
    out: ConvIdx,
}

/// Generator weights plus the fixed tensor layout they follow.
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    cfg: GeneratorConfig,
    params: ParamSet,
    layout: GenLayout,
}

fn add_conv<R: Rng>(
    ps: &mut ParamSet,
    rng: &mut R,
    name: &str,
    out_c: usize,
    in_c: usize,
    k: usize,
) -> ConvIdx {
    let w = ps.add(format!("{name}.w"), Init::conv_weight(rng, out_c, in_c, k, k));
    let b = ps.add(format!("{name}.b"), Init::zeros(&[out_c]));
    ConvIdx { w, b }
}

fn add_linear<R: Rng>(
    ps: &mut ParamSet,
    rng: &mut R,
    name: &str,
    out_d: usize,
    in_d: usize,
) -> ConvIdx {
    let w = ps.add(format!("{name}.w"), Init::linear_weight(rng, out_d, in_d));
    let b = ps.add(format!("{name}.b"), Init::zeros(&[out_d]));
    ConvIdx { w, b }
}

fn add_norm(ps: &mut ParamSet, name: &str, c: usize) -> NormIdx {
    let gamma = ps.add(format!("{name}.gamma"), Init::ones(&[c]));
    let beta = ps.add(format!("{name}.beta"), Init::zeros(&[c]));
    NormIdx { gamma, beta }
}

impl GeneratorParams {
    /// Fresh randomly initialized generator.
    pub fn init<R: Rng>(cfg: GeneratorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamSet::new();
        let z_proj = add_linear(&mut ps, rng, "gen.z_proj", cfg.temb_dim, cfg.z_dim);
        let cond = add_linear(&mut ps, rng, "gen.cond", cfg.cond_dim, cfg.temb_dim);
        let stem = add_conv(&mut ps, rng, "gen.stem", cfg.base_channels, cfg.in_channels, 3);

        let mut enc_conv = Vec::new();
        let mut enc_norm = Vec::new();
        let mut down = Vec::new();
        for l in 0..cfg.depth {
            let ch = cfg.channels(l);
            enc_conv.push(add_conv(&mut ps, rng, &format!("gen.enc{l}.conv"), ch, ch, 3));
            enc_norm.push(add_norm(&mut ps, &format!("gen.enc{l}.norm"), ch));
            if l + 1 < cfg.depth {
                down.push(add_conv(
                    &mut ps,
                    rng,
                    &format!("gen.down{l}"),
                    cfg.channels(l + 1),
                    ch,
                    3,
                ));
            }
        }

        let deep = cfg.channels(cfg.depth - 1);
        let mid_conv = [
            add_conv(&mut ps, rng, "gen.mid0.conv", deep, deep, 3),
            add_conv(&mut ps, rng, "gen.mid1.conv", deep, deep, 3),
        ];
        let mid_norm = [
            add_norm(&mut ps, "gen.mid0.norm", deep),
            add_norm(&mut ps, "gen.mid1.norm", deep),
        ];
        let mid_cond = [
            add_linear(&mut ps, rng, "gen.mid0.cond", deep, cfg.cond_dim),
            add_linear(&mut ps, rng, "gen.mid1.cond", deep, cfg.cond_dim),
        ];

        let mut up_conv_a = Vec::new();
        let mut up_norm_a = Vec::new();
        let mut up_cond = Vec::new();
        let mut up_conv_b = Vec::new();
        let mut up_norm_b = Vec::new();
        for l in (0..cfg.depth - 1).rev() {
            let ch = cfg.channels(l);
            let ch_deep = cfg.channels(l + 1);
            up_conv_a.push(add_conv(&mut ps, rng, &format!("gen.up{l}.conv_a"), ch, ch_deep, 3));
            up_norm_a.push(add_norm(&mut ps, &format!("gen.up{l}.norm_a"), ch));
            up_cond.push(add_linear(&mut ps, rng, &format!("gen.up{l}.cond"), ch, cfg.cond_dim));
            up_conv_b.push(add_conv(&mut ps, rng, &format!("gen.up{l}.conv_b"), ch, 2 * ch, 3));
            up_norm_b.push(add_norm(&mut ps, &format!("gen.up{l}.norm_b"), ch));
        }
        let out = add_conv(&mut ps, rng, "gen.out", cfg.in_channels, cfg.base_channels, 3);

        let layout = GenLayout {
            z_proj,
            cond,
            stem,
            enc_conv,
            enc_norm,
            down,
            mid_conv,
            mid_norm,
            mid_cond,
            up_conv_a,
            up_norm_a,
            up_cond,
            up_conv_b,
            up_norm_b,
            out,
        };
        Ok(GeneratorParams { cfg, params: ps, layout })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Replaces the weights with a set of identical layout (e.g. EMA shadow
    /// weights loaded from a checkpoint).
    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        if !self.params.same_layout(&params) {
            return Err(Error::Checkpoint(
                "generator parameter layout mismatch".into(),
            ));
        }
        self.params = params;
        Ok(())
    }

    fn check_input(&self, x: &ImageBatch, z: &LatentCode) -> Result<()> {
        let (b, c, h, w) = x.dims();
        if c != self.cfg.in_channels {
            return Err(Error::Shape(format!(
                "generator expects {} channels, got {c}",
                self.cfg.in_channels
            )));
        }
        let mult = self.cfg.spatial_multiple();
        if h < 8 || w < 8 || h % mult != 0 || w % mult != 0 {
            return Err(Error::Shape(format!(
                "spatial dims {h}x{w} must be >= 8 and divisible by {mult}"
            )));
        }
        let (zb, zd) = z.dims();
        if zb != b || zd != self.cfg.z_dim {
            return Err(Error::Shape(format!(
                "latent code {zb}x{zd} does not match batch {b} with z_dim {}",
                self.cfg.z_dim
            )));
        }
        Ok(())
    }

    /// Conditioning vector node: `silu(W_c (temb + W_z z) + b_c)`, `(B, cond_dim)`.
    fn cond_vector(&self, g: &mut Graph, p: &[NodeId], t: usize, z: NodeId) -> NodeId {
        let batch = g.value(z).shape()[0];
        let temb1 = sinusoidal_embedding(t as f64, self.cfg.temb_dim);
        let temb = Array2::from_shape_fn((batch, self.cfg.temb_dim), |(_, j)| temb1[j]);
        let temb = g.constant(temb.into_dyn());
        let zp = g.linear(z, p[self.layout.z_proj.w], Some(p[self.layout.z_proj.b]));
        let merged = g.add(temb, zp);
        let cv = g.linear(merged, p[self.layout.cond.w], Some(p[self.layout.cond.b]));
        g.silu(cv)
    }

    fn inject(&self, g: &mut Graph, p: &[NodeId], h: NodeId, cond: NodeId, proj: ConvIdx) -> NodeId {
        let bias = g.linear(cond, p[proj.w], Some(p[proj.b]));
        let (bsz, ch) = {
            let s = g.value(bias).shape();
            (s[0], s[1])
        };
        let bias = g.reshape(bias, &[bsz, ch, 1, 1]);
        g.add(h, bias)
    }

    fn conv_gn_silu(
        &self,
        g: &mut Graph,
        p: &[NodeId],
        h: NodeId,
        conv: ConvIdx,
        norm: NormIdx,
        stride: usize,
        cond: Option<(NodeId, ConvIdx)>,
    ) -> NodeId {
        let h = g.conv2d(h, p[conv.w], Some(p[conv.b]), stride, 1);
        let h = g.group_norm(h, p[norm.gamma], p[norm.beta], self.cfg.groups, 1e-5);
        let h = match cond {
            Some((cv, proj)) => self.inject(g, p, h, cv, proj),
            None => h,
        };
        g.silu(h)
    }

    /// Builds the forward pass inside an existing graph. `p` must come from
    /// binding [`Self::params`] in set order.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        p: &[NodeId],
        x: NodeId,
        t: usize,
        z: NodeId,
    ) -> NodeId {
        let cv = self.cond_vector(g, p, t, z);

        let mut h = g.conv2d(x, p[self.layout.stem.w], Some(p[self.layout.stem.b]), 1, 1);
        h = g.silu(h);

        let mut skips = Vec::new();
        for l in 0..self.cfg.depth {
            h = self.conv_gn_silu(g, p, h, self.layout.enc_conv[l], self.layout.enc_norm[l], 1, None);
            if l + 1 < self.cfg.depth {
                skips.push(h);
                let down = self.layout.down[l];
                h = g.conv2d(h, p[down.w], Some(p[down.b]), 2, 1);
                h = g.silu(h);
            }
        }

        for i in 0..2 {
            h = self.conv_gn_silu(
                g,
                p,
                h,
                self.layout.mid_conv[i],
                self.layout.mid_norm[i],
                1,
                Some((cv, self.layout.mid_cond[i])),
            );
        }

        for (i, l) in (0..self.cfg.depth - 1).rev().enumerate() {
            h = g.upsample_nearest2(h);
            h = self.conv_gn_silu(
                g,
                p,
                h,
                self.layout.up_conv_a[i],
                self.layout.up_norm_a[i],
                1,
                Some((cv, self.layout.up_cond[i])),
            );
            h = g.concat_channels(h, skips[l]);
            h = self.conv_gn_silu(g, p, h, self.layout.up_conv_b[i], self.layout.up_norm_b[i], 1, None);
        }

        let y = g.conv2d(h, p[self.layout.out.w], Some(p[self.layout.out.b]), 1, 1);
        g.tanh(y)
    }

    /// Whole-network inference: predicts the clean image from a noisy one.
    pub fn forward(&self, x_t: &ImageBatch, t: usize, z: &LatentCode) -> Result<ImageBatch> {
        self.check_input(x_t, z)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xn = g.constant(x_t.data().clone().into_dyn());
        let zn = g.constant(z.data().clone().into_dyn());
        let y = self.forward_graph(&mut g, &p, xn, t, zn);
        let arr = g
            .value(y)
            .clone()
            .into_dimensionality::<ndarray::Ix4>()
            .expect("generator output is 4-d");
        ImageBatch::new(arr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn small_cfg() -> GeneratorConfig {
        GeneratorConfig {
            base_channels: 8,
            z_dim: 12,
            temb_dim: 16,
            cond_dim: 16,
            groups: 4,
            ..GeneratorConfig::default()
        }
    }

    fn noise_batch(rng: &mut ChaCha12Rng, b: usize, c: usize, h: usize, w: usize) -> ImageBatch {
        use rand_distr::{Distribution, StandardNormal};
        let v: Vec<f64> = (0..b * c * h * w).map(|_| StandardNormal.sample(rng)).collect();
        ImageBatch::new(ndarray::Array4::from_shape_vec((b, c, h, w), v).unwrap()).unwrap()
    }

    #[test]
    fn output_shape_matches_input_shape() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let gen = GeneratorParams::init(small_cfg(), &mut rng).unwrap();
        let x = noise_batch(&mut rng, 2, 3, 64, 64);
        let z = LatentCode::sample(&mut rng, 2, 12);
        let y = gen.forward(&x, 2, &z).unwrap();
        assert_eq!(y.dims(), (2, 3, 64, 64));
    }

    #[test]
    fn output_is_bounded_by_tanh() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let gen = GeneratorParams::init(small_cfg(), &mut rng).unwrap();
        let x = noise_batch(&mut rng, 2, 3, 16, 16);
        let z = LatentCode::sample(&mut rng, 2, 12);
        let y = gen.forward(&x, 4, &z).unwrap();
        assert!(y.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn distinct_latents_change_the_output() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let gen = GeneratorParams::init(small_cfg(), &mut rng).unwrap();
        let x = noise_batch(&mut rng, 1, 3, 16, 16);
        let z1 = LatentCode::sample(&mut rng, 1, 12);
        let z2 = LatentCode::sample(&mut rng, 1, 12);
        let y1 = gen.forward(&x, 1, &z1).unwrap();
        let y2 = gen.forward(&x, 1, &z2).unwrap();
        assert!(y1
            .data()
            .iter()
            .zip(y2.data().iter())
            .any(|(a, b)| (a - b).abs() > 1e-12));
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let gen = GeneratorParams::init(small_cfg(), &mut rng).unwrap();
        // wrong channel count
        let x = noise_batch(&mut rng, 1, 2, 16, 16);
        let z = LatentCode::sample(&mut rng, 1, 12);
        assert!(gen.forward(&x, 1, &z).is_err());
        // non-divisible spatial dims
        let x = noise_batch(&mut rng, 1, 3, 18, 18);
        assert!(gen.forward(&x, 1, &z).is_err());
        // wrong latent dim
        let x = noise_batch(&mut rng, 1, 3, 16, 16);
        let z = LatentCode::sample(&mut rng, 1, 5);
        assert!(gen.forward(&x, 1, &z).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let gen = GeneratorParams::init(small_cfg(), &mut rng).unwrap();
        let x = noise_batch(&mut rng, 2, 3, 16, 16);
        let z = LatentCode::sample(&mut rng, 2, 12);
        let y1 = gen.forward(&x, 3, &z).unwrap();
        let y2 = gen.forward(&x, 3, &z).unwrap();
        assert_eq!(y1, y2);
    }
}
