//! Adam with decoupled weight decay, plus global-norm gradient clipping.

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

/// Per-parameter first/second moments and the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, param_lens: &[usize]) -> Self {
        AdamState {
            cfg,
            step: 0,
            m: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update over all parameters.
    ///
    /// Weight decay is decoupled: parameters shrink by `lr * wd * param`
    /// before the moment-based update, so the decay never enters the
    /// moments.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(params.len(), grads.len(), "need one gradient per parameter");
        self.step += 1;
        let t = self.step as i32;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            let data = p.data_mut();
            assert_eq!(data.len(), g.len(), "gradient shape mismatch");
            if c.weight_decay != 0.0 {
                let shrink = c.lr * c.weight_decay;
                for w in data.iter_mut() {
                    *w -= shrink * *w;
                }
            }
            for i in 0..data.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
    }
}

/// Scale all gradients down to a global L2 norm of `max_norm` when they
/// exceed it. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &v in g {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut p = Tensor::row(vec![1.0, -2.0, 0.5]);
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::new(0.1, 0.0), &[3]);
        adam.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_against_the_gradient_by_about_lr() {
        let lr = 0.001;
        let mut p = Tensor::row(vec![1.0, 1.0]);
        let mut adam = AdamState::new(AdamConfig::new(lr, 0.0), &[2]);
        adam.step(&mut [&mut p], &[&[0.5, -3.0]]);
        // Bias-corrected first step is lr * g/(|g| + eps') regardless of the
        // gradient magnitude.
        let d0 = 1.0 - p.data()[0];
        let d1 = 1.0 - p.data()[1];
        assert!(d0 > 0.0 && (d0 - lr).abs() < 1e-6, "step {d0}");
        assert!(d1 < 0.0 && (-d1 - lr).abs() < 1e-6, "step {d1}");
    }

    #[test]
    fn descends_a_quadratic() {
        // f(w) = w^2 from w = 1; three steps must shrink |w|.
        let mut p = Tensor::scalar(1.0);
        let mut adam = AdamState::new(AdamConfig::new(0.1, 0.0), &[1]);
        for _ in 0..3 {
            let g = 2.0 * p.item();
            adam.step(&mut [&mut p], &[&[g]]);
        }
        assert!(p.item().abs() < 1.0);
    }

    #[test]
    fn decay_shrinks_before_the_update() {
        let mut p = Tensor::scalar(10.0);
        let mut adam = AdamState::new(AdamConfig::new(0.001, 0.1), &[1]);
        adam.step(&mut [&mut p], &[&[0.0]]);
        // Only the decoupled decay acts when the gradient is zero.
        assert!((p.item() - 10.0 * (1.0 - 0.001 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn clipping_rescales_to_the_target_norm() {
        let mut grads = vec![vec![3.0, 0.0], vec![4.0]];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let after: f64 = grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
        // Under the bound nothing changes.
        let mut small = vec![vec![0.1, 0.1]];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![vec![0.1, 0.1]]);
    }
}
