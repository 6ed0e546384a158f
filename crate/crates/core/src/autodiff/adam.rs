use serde::{Deserialize, Serialize};

use super::tape::{Gradients, ParamStore};
use super::tensor::Tensor;
use super::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    /// L2 coefficient; `l2 * w` is added to the gradient before the moment
    /// updates.
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, l2: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.rows, t.cols)).collect();
        Adam { config, step: 0, m: zeros(), v: zeros() }
    }

    /// Grows moment buffers after a parameter was resized (rows appended).
    pub fn sync_shapes(&mut self, params: &ParamStore) {
        for (i, (_, t)) in params.iter().enumerate() {
            if i >= self.m.len() {
                self.m.push(Tensor::zeros(t.rows, t.cols));
                self.v.push(Tensor::zeros(t.rows, t.cols));
            }
            for buf in [&mut self.m[i], &mut self.v[i]] {
                if buf.shape() != t.shape() {
                    buf.data.resize(t.len(), 0.0);
                    buf.rows = t.rows;
                    buf.cols = t.cols;
                }
            }
        }
    }

    /// One Adam update over every parameter. Parameters without a gradient
    /// still receive the L2 term and moment decay.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<(), AutodiffError> {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for p in params.ids().collect::<Vec<_>>() {
            let w = params.get_mut(p);
            let (m, v) = (&mut self.m[p.0], &mut self.v[p.0]);
            if m.shape() != w.shape() {
                return Err(AutodiffError::ShapeMismatch(format!("moment shape for parameter {}", p.0)));
            }
            let g = grads.get(p);
            if let Some(g) = g {
                if g.shape() != w.shape() {
                    return Err(AutodiffError::ShapeMismatch(format!("gradient shape for parameter {}", p.0)));
                }
            }
            for k in 0..w.data.len() {
                let gk = g.map_or(0.0, |g| g.data[k]) + c.l2 * w.data[k];
                m.data[k] = c.beta1 * m.data[k] + (1.0 - c.beta1) * gk;
                v.data[k] = c.beta2 * v.data[k] + (1.0 - c.beta2) * gk * gk;
                let mh = m.data[k] / bc1;
                let vh = v.data[k] / bc2;
                w.data[k] -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
