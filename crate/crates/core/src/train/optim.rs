use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Grads, ParamStore, Tensor};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Number of updates taken so far.
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(store: &ParamStore, beta1: f64, weight_decay: f64) -> Self {
        let zeros = || {
            store
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.rows, p.value.cols))
                .collect::<Vec<_>>()
        };
        AdamW {
            beta1,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update of every trainable parameter.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in store.params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let g = &grads.g[i].data;
            let m = &mut self.m[i].data;
            let v = &mut self.v[i].data;
            for (k, w) in p.value.data.iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                *w -= lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * *w);
            }
        }
    }

    /// Moments as named tensors, for checkpoints.
    pub fn named_tensors(&self, store: &ParamStore) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, p) in store.params.iter().enumerate() {
            if p.trainable {
                out.push((format!("adam.m.{}", p.name), self.m[i].clone()));
                out.push((format!("adam.v.{}", p.name), self.v[i].clone()));
            }
        }
        out
    }

    /// Restores moments saved by [`AdamW::named_tensors`].
    pub fn load(&mut self, store: &ParamStore, get: impl Fn(&str) -> Option<Tensor>, t: u64) -> Result<()> {
        for (i, p) in store.params.iter().enumerate() {
            if !p.trainable {
                continue;
            }
            for (prefix, slot) in [("adam.m.", &mut self.m[i]), ("adam.v.", &mut self.v[i])] {
                let name = format!("{prefix}{}", p.name);
                let t = get(&name).ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor {name}")))?;
                if t.shape() != slot.shape() {
                    return Err(Error::Checkpoint(format!("shape mismatch for {name}")));
                }
                *slot = t;
            }
        }
        self.t = t;
        Ok(())
    }
}

/// One-cycle learning-rate schedule: cosine warm-up from `peak / div_start`
/// to `peak` over the first `warmup_frac` of the steps, then cosine
/// annealing down to `peak / div_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycle {
    pub peak: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
    pub div_start: f64,
    pub div_final: f64,
}

impl OneCycle {
    pub fn new(peak: f64, total_steps: usize, warmup_frac: f64) -> Self {
        OneCycle {
            peak,
            total_steps,
            warmup_frac,
            div_start: 10.0,
            div_final: 100.0,
        }
    }

    /// Learning rate of update `step` (0-based).
    pub fn lr(&self, step: usize) -> f64 {
        let start = self.peak / self.div_start;
        let end = self.peak / self.div_final;
        let total = self.total_steps.max(1);
        let warm = ((total as f64 * self.warmup_frac).round() as usize).clamp(1, total);
        let cos = |from: f64, to: f64, frac: f64| to + (from - to) * 0.5 * (1.0 + (PI * frac.clamp(0.0, 1.0)).cos());
        if step < warm {
            cos(start, self.peak, step as f64 / warm as f64)
        } else {
            let span = (total - warm).max(1);
            cos(self.peak, end, (step - warm) as f64 / span as f64)
        }
    }
}
