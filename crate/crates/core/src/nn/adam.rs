//! Adam optimizer with bias correction.

use ndarray::ArrayD;

use super::ParamSet;

/// Optimizer state for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64) -> Self {
        let m = (0..params.len())
            .map(|i| ArrayD::zeros(params.get(i).raw_dim()))
            .collect();
        let v = (0..params.len())
            .map(|i| ArrayD::zeros(params.get(i).raw_dim()))
            .collect();
        AdamState {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    /// One update. `grads` must align with `params` order.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &[ArrayD<f64>]) {
        assert_eq!(grads.len(), params.len(), "gradient/parameter count mismatch");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = &grads[i];
            assert_eq!(
                g.shape(),
                params.get(i).shape(),
                "gradient shape mismatch for {}",
                params.name(i)
            );
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(g, |mi, gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            v.zip_mut_with(g, |vi, gi| *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi);
            let p = params.get_mut(i);
            for ((pi, mi), vi) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mhat = mi / c1;
                let vhat = vi / c2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn zero_learning_rate_is_a_fixed_point() {
        let mut p = ParamSet::new();
        p.add("w", ArrayD::from_elem(IxDyn(&[2, 2]), 0.5));
        let before = p.clone();
        let mut opt = AdamState::new(&p, 0.0, 0.5, 0.9);
        let g = vec![ArrayD::from_elem(IxDyn(&[2, 2]), 1.0)];
        opt.apply(&mut p, &g);
        assert_eq!(p, before);
    }

    #[test]
    fn descends_a_quadratic() {
        // minimize (w - 3)^2 from w = 0
        let mut p = ParamSet::new();
        p.add("w", ArrayD::from_elem(IxDyn(&[1]), 0.0));
        let mut opt = AdamState::new(&p, 0.1, 0.9, 0.999);
        for _ in 0..500 {
            let w = p.get(0)[[0]];
            let g = vec![ArrayD::from_elem(IxDyn(&[1]), 2.0 * (w - 3.0))];
            opt.apply(&mut p, &g);
        }
        assert!((p.get(0)[[0]] - 3.0).abs() < 1e-2);
    }
}
