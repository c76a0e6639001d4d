//! Discrete forward-diffusion noise schedule and posterior coefficients.
//!
//! Timesteps are 1-indexed; `t = T` is the most noisy state. For each step
//! the schedule carries the closed-form coefficients of the Gaussian
//! posterior `q(x_{t-1} | x_t, x0)`:
//!
//! ```text
//! mean  = A_t * x0 + B_t * x_t
//! A_t   = sqrt(abar_{t-1}) * beta_t / (1 - abar_t)
//! B_t   = sqrt(alpha_t) * (1 - abar_{t-1}) / (1 - abar_t)
//! var_t = beta_t * (1 - abar_{t-1}) / (1 - abar_t)
//! ```
//!
//! With `abar_0 = 1` the `t = 1` step is deterministic: `A_1 = 1`,
//! `B_1 = 0`, `var_1 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBatch;

/// Shape of the per-step noise rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Betas interpolate linearly from `beta_min` to `beta_max`.
    Linear,
    /// Betas derived from a squared-cosine signal curve, clipped
    /// into `[beta_min, beta_max]`.
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::Param(format!(
                "unknown schedule kind '{other}' (expected 'linear' or 'cosine')"
            ))),
        }
    }
}

/// Per-timestep constants of the forward process and its posterior.
///
/// Immutable after construction; cheap to clone and safe to share.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    t_max: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    /// `abar[t]` is the cumulative product up to step `t`, with `abar[0] = 1`.
    alpha_bar: Vec<f64>,
    /// `1 - abar_t` tracked by its own recurrence (exactly 0 at `t = 0`).
    one_minus_abar: Vec<f64>,
    coef_clean: Vec<f64>,
    coef_noisy: Vec<f64>,
    sigma2: Vec<f64>,
}

/// Default beta range for the few-step linear schedule. Few-step sampling
/// needs large per-step noise so the last step still spans most of the
/// signal-to-noise range.
pub const DEFAULT_BETA_MIN: f64 = 0.1;
pub const DEFAULT_BETA_MAX: f64 = 0.9;

/// Builds the schedule. `T >= 1`, `0 < beta_min <= beta_max < 1`.
pub fn make_schedule(
    t_max: usize,
    beta_min: f64,
    beta_max: f64,
    kind: ScheduleKind,
) -> Result<NoiseSchedule> {
    if t_max == 0 {
        return Err(Error::Param("schedule needs at least one step".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::Param(format!(
            "beta range must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }

    let beta: Vec<f64> = match kind {
        ScheduleKind::Linear => (1..=t_max)
            .map(|t| {
                if t_max == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * (t - 1) as f64 / (t_max - 1) as f64
                }
            })
            .collect(),
        ScheduleKind::Cosine => {
            // Squared-cosine cumulative signal curve; betas are the per-step
            // ratios, clipped into the requested range.
            let s = 0.008;
            let f = |u: f64| ((u + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
            (1..=t_max)
                .map(|t| {
                    let prev = f((t - 1) as f64 / t_max as f64) / f(0.0);
                    let cur = f(t as f64 / t_max as f64) / f(0.0);
                    (1.0 - cur / prev).clamp(beta_min, beta_max)
                })
                .collect()
        }
    };

    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(t_max + 1);
    alpha_bar.push(1.0);
    for a in &alpha {
        alpha_bar.push(alpha_bar.last().unwrap() * a);
    }
    // 1 - abar_t by the recurrence (1 - abar_t) = (1 - abar_{t-1}) + abar_{t-1} * beta_t,
    // which is exact at t = 1 and keeps the t = 1 posterior coefficients
    // exactly (A_1, B_1, sigma_1^2) = (1, 0, 0).
    let mut one_minus_abar = Vec::with_capacity(t_max + 1);
    one_minus_abar.push(0.0);
    for t in 1..=t_max {
        let prev: f64 = one_minus_abar[t - 1];
        one_minus_abar.push(prev + alpha_bar[t - 1] * beta[t - 1]);
    }

    let mut coef_clean = Vec::with_capacity(t_max);
    let mut coef_noisy = Vec::with_capacity(t_max);
    let mut sigma2 = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let denom = one_minus_abar[t];
        coef_clean.push(alpha_bar[t - 1].sqrt() * beta[t - 1] / denom);
        coef_noisy.push(alpha[t - 1].sqrt() * one_minus_abar[t - 1] / denom);
        sigma2.push(beta[t - 1] * one_minus_abar[t - 1] / denom);
    }

    Ok(NoiseSchedule {
        t_max,
        beta,
        alpha,
        alpha_bar,
        one_minus_abar,
        coef_clean,
        coef_noisy,
        sigma2,
    })
}

impl NoiseSchedule {
    /// Number of diffusion steps `T`.
    pub fn len(&self) -> usize {
        self.t_max
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_max {
            return Err(Error::Param(format!(
                "timestep {t} outside 1..={}",
                self.t_max
            )));
        }
        Ok(())
    }

    /// `beta_t`, `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    /// `alpha_t = 1 - beta_t`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// Cumulative product `abar_t`; accepts `t` in `0..=T` with `abar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Posterior clean-image coefficient `A_t`.
    pub fn coef_clean(&self, t: usize) -> f64 {
        self.coef_clean[t - 1]
    }

    /// Posterior noisy-image coefficient `B_t`.
    pub fn coef_noisy(&self, t: usize) -> f64 {
        self.coef_noisy[t - 1]
    }

    /// Posterior variance `sigma_t^2`.
    pub fn sigma2(&self, t: usize) -> f64 {
        self.sigma2[t - 1]
    }

    /// Posterior standard deviation `sigma_t`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma2[t - 1].sqrt()
    }

    /// Marginal coefficients `(sqrt(abar_t), sqrt(1 - abar_t))` of
    /// `q(x_t | x0)`; accepts `t` in `0..=T`.
    pub fn marginal_coeffs(&self, t: usize) -> (f64, f64) {
        (self.alpha_bar[t].sqrt(), self.one_minus_abar[t].sqrt())
    }

    /// Draws `x_t ~ q(x_t | x0)` given caller-supplied unit Gaussian noise.
    ///
    /// `t` must be in `1..=T`; `eps` must match the shape of `x0`.
    pub fn forward_diffuse(
        &self,
        x0: &ImageBatch,
        t: usize,
        eps: &ImageBatch,
    ) -> Result<ImageBatch> {
        self.check_step(t)?;
        self.forward_diffuse_any(x0, t, eps)
    }

    /// Like [`forward_diffuse`](Self::forward_diffuse) but also accepts
    /// `t = 0`, where the result is `x0` itself.
    pub fn forward_diffuse_any(
        &self,
        x0: &ImageBatch,
        t: usize,
        eps: &ImageBatch,
    ) -> Result<ImageBatch> {
        if t > self.t_max {
            return Err(Error::Param(format!(
                "timestep {t} outside 0..={}",
                self.t_max
            )));
        }
        x0.check_same_shape(eps, "forward_diffuse x0 vs eps")?;
        let (signal, noise) = self.marginal_coeffs(t);
        let out = x0.data() * signal + eps.data() * noise;
        ImageBatch::new(out)
    }

    /// Aligned text table of the schedule, one row per step.
    pub fn table(&self) -> String {
        let mut out = String::from(
            "  t      beta     alpha alpha_bar         A         B    sigma2\n",
        );
        for t in 1..=self.t_max {
            out.push_str(&format!(
                "{:3} {:9.6} {:9.6} {:9.6} {:9.6} {:9.6} {:9.6}\n",
                t,
                self.beta(t),
                self.alpha(t),
                self.alpha_bar(t),
                self.coef_clean(t),
                self.coef_noisy(t),
                self.sigma2(t),
            ));
        }
        out
    }

    /// Comma-separated form with a header row.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,beta,alpha,alpha_bar,A,B,sigma2\n");
        for t in 1..=self.t_max {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t,
                self.beta(t),
                self.alpha(t),
                self.alpha_bar(t),
                self.coef_clean(t),
                self.coef_noisy(t),
                self.sigma2(t),
            ));
        }
        out
    }
}
