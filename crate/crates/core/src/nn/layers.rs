use std::rc::Rc;

use rand::Rng;

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Fully connected layer, weights stored as `(in, out)`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let w = store.kaiming_uniform(format!("{name}.weight"), in_dim, out_dim, rng);
        let b = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim), true));
        Dense { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        g.linear(x, self.w, self.b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        BatchNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::from_vec(1, dim, vec![1.0; dim]), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(1, dim), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(1, dim), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::from_vec(1, dim, vec![1.0; dim]), false),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId, mask: Option<Rc<Vec<bool>>>) -> NodeId {
        g.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, mask)
    }
}

/// Stack of `Dense → BatchNorm → ReLU` blocks.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<(Dense, BatchNorm)>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, widths: &[usize], rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            // The bias is redundant in front of batch norm.
            let dense = Dense::new(store, &format!("{name}.fc{i}"), d, w, false, rng);
            let bn = BatchNorm::new(store, &format!("{name}.bn{i}"), w);
            layers.push((dense, bn));
            d = w;
        }
        Mlp { layers }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |(d, _)| d.out_dim)
    }

    pub fn forward(&self, g: &mut Graph<'_>, mut x: NodeId, mask: Option<Rc<Vec<bool>>>) -> NodeId {
        for (dense, bn) in &self.layers {
            let h = dense.forward(g, x);
            x = g.batch_norm_relu(h, bn.gamma, bn.beta, bn.running_mean, bn.running_var, mask.clone());
        }
        x
    }
}
