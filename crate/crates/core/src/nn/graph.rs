//! Reverse-mode autodiff tape.
//!
//! A [`Graph`] records every operation of one forward pass together with the
//! values it produced. [`Graph::backward`] walks the tape in reverse order,
//! accumulating gradients for intermediate nodes and adding parameter
//! gradients into a [`Grads`] buffer. Losses are evaluated outside the graph
//! and seed the backward pass with their output gradients.

use std::rc::Rc;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{gemm, Tensor};

/// Handle of a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
/// Running-statistics momentum.
pub const BN_MOMENTUM: f64 = 0.1;

/// Pending running-statistics update produced by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub batch_mean: Vec<f64>,
    /// Unbiased batch variance.
    pub batch_var: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Linear {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
    },
    Relu(NodeId),
    BatchNorm {
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
        relu: bool,
        /// Rows that contributed to the batch statistics (training mode).
        batch: Option<Option<Rc<Vec<bool>>>>,
    },
    Gather {
        x: NodeId,
        idx: Rc<Vec<u32>>,
    },
    ConcatCols(Vec<NodeId>),
    GroupMax {
        x: NodeId,
        argmax: Vec<u32>,
    },
    Interpolate {
        x: NodeId,
        idx: Rc<Vec<[u32; 3]>>,
        w: Rc<Vec<[f64; 3]>>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// One forward pass worth of recorded operations.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    training: bool,
    /// When false, training-mode batch norms use batch statistics but do not
    /// queue running-statistics updates.
    pub record_stats: bool,
    stat_updates: Vec<StatUpdate>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore, training: bool) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            training,
            record_stats: true,
            stat_updates: Vec::new(),
        }
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Running-statistics updates queued by training-mode batch norms.
    pub fn take_stat_updates(&mut self) -> Vec<StatUpdate> {
        std::mem::take(&mut self.stat_updates)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Constant leaf: no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Leaf bound to a parameter; its gradient is accumulated into `Grads`.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let v = self.store.get(id).clone();
        self.push(v, Op::Param(id), true)
    }

    /// `x·W + b`.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: Option<ParamId>) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let wv = self.store.get(w);
        let mut out = Tensor::zeros(xv.rows, wv.cols);
        if let Some(b) = b {
            let bv = self.store.get(b);
            for r in 0..out.rows {
                out.row_mut(r).copy_from_slice(&bv.data);
            }
            gemm(1.0, xv, false, wv, false, 1.0, &mut out);
        } else {
            gemm(1.0, xv, false, wv, false, 0.0, &mut out);
        }
        self.push(out, Op::Linear { x, w, b }, true)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut out = self.nodes[x.0].value.clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    /// Per-column batch norm. In training mode the statistics are computed
    /// over the rows selected by `mask` (all rows when `None`); in evaluation
    /// mode the running statistics are used.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
        mask: Option<Rc<Vec<bool>>>,
    ) -> NodeId {
        self.batch_norm_impl(x, [gamma, beta, running_mean, running_var], mask, false)
    }

    /// [`Graph::batch_norm`] followed by ReLU, as one node.
    pub fn batch_norm_relu(
        &mut self,
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
        mask: Option<Rc<Vec<bool>>>,
    ) -> NodeId {
        self.batch_norm_impl(x, [gamma, beta, running_mean, running_var], mask, true)
    }

    fn batch_norm_impl(&mut self, x: NodeId, ids: [ParamId; 4], mask: Option<Rc<Vec<bool>>>, relu: bool) -> NodeId {
        let [gamma, beta, running_mean, running_var] = ids;
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols;
        let inside = |r: usize| mask.as_ref().is_none_or(|m| m[r]);
        let (mean, var, batch) = if self.training {
            let mut mean = vec![0.0; cols];
            let mut n = 0usize;
            for (r, row) in xv.data.chunks_exact(cols).enumerate() {
                if inside(r) {
                    n += 1;
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
            }
            let nf = n.max(1) as f64;
            mean.iter_mut().for_each(|m| *m /= nf);
            let mut var = vec![0.0; cols];
            for (r, row) in xv.data.chunks_exact(cols).enumerate() {
                if inside(r) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
            }
            let unbiased: Vec<f64> = var.iter().map(|s| s / (n.max(2) - 1) as f64).collect();
            var.iter_mut().for_each(|s| *s /= nf);
            if self.record_stats && n > 0 {
                self.stat_updates.push(StatUpdate {
                    mean_id: running_mean,
                    var_id: running_var,
                    batch_mean: mean.clone(),
                    batch_var: unbiased,
                });
            }
            (mean, var, Some(mask))
        } else {
            (
                self.store.get(running_mean).data.clone(),
                self.store.get(running_var).data.clone(),
                None,
            )
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        // y = a·x + b per column
        let g = &self.store.get(gamma).data;
        let bt = &self.store.get(beta).data;
        let a: Vec<f64> = g.iter().zip(&inv_std).map(|(g, s)| g * s).collect();
        let b: Vec<f64> = (0..cols).map(|c| bt[c] - a[c] * mean[c]).collect();
        let mut out = Tensor::zeros(xv.rows, cols);
        for (orow, xrow) in out.data.chunks_exact_mut(cols).zip(xv.data.chunks_exact(cols)) {
            for c in 0..cols {
                let y = a[c] * xrow[c] + b[c];
                orow[c] = if relu { y.max(0.0) } else { y };
            }
        }
        self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                relu,
                batch,
            },
            true,
        )
    }

    /// Rows of `x` selected by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, x: NodeId, idx: Rc<Vec<u32>>) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let mut out = Tensor::zeros(idx.len(), xv.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(xv.row(i as usize));
        }
        let rg = self.rg(x);
        self.push(out, Op::Gather { x, idx }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.nodes[parts[0].0].value.rows;
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let pv = &self.nodes[p.0].value;
                assert_eq!(pv.rows, rows, "concat row mismatch");
                out.row_mut(r)[off..off + pv.cols].copy_from_slice(pv.row(r));
                off += pv.cols;
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Column-wise max over consecutive groups of `k` rows.
    pub fn group_max(&mut self, x: NodeId, k: usize) -> NodeId {
        let xv = &self.nodes[x.0].value;
        assert!(k > 0 && xv.rows % k == 0, "rows not divisible by group size");
        let groups = xv.rows / k;
        let cols = xv.cols;
        let mut out = Tensor::zeros(groups, cols);
        let mut argmax = vec![0u32; groups * cols];
        for gi in 0..groups {
            let base = gi * k;
            let orow = out.row_mut(gi);
            orow.copy_from_slice(xv.row(base));
            let am = &mut argmax[gi * cols..(gi + 1) * cols];
            am.iter_mut().for_each(|a| *a = base as u32);
            for r in base + 1..base + k {
                for (c, v) in xv.row(r).iter().enumerate() {
                    if *v > orow[c] {
                        orow[c] = *v;
                        am[c] = r as u32;
                    }
                }
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::GroupMax { x, argmax }, rg)
    }

    /// Weighted sum of three rows of `x` per output row.
    pub fn interpolate(&mut self, x: NodeId, idx: Rc<Vec<[u32; 3]>>, w: Rc<Vec<[f64; 3]>>) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let mut out = Tensor::zeros(idx.len(), xv.cols);
        for (o, (ii, ww)) in idx.iter().zip(w.iter()).enumerate() {
            let orow = out.row_mut(o);
            for j in 0..3 {
                let src = xv.row(ii[j] as usize);
                for (a, b) in orow.iter_mut().zip(src) {
                    *a += ww[j] * b;
                }
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::Interpolate { x, idx, w }, rg)
    }

    /// Propagates the seeded output gradients back through the tape and adds
    /// parameter gradients into `grads`.
    pub fn backward(&self, seeds: &[(NodeId, &Tensor)], grads: &mut Grads) {
        let mut g: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (id, t) in seeds {
            assert_eq!(self.nodes[id.0].value.shape(), t.shape(), "seed shape mismatch");
            accumulate(&mut g[id.0], t);
            last = last.max(id.0);
        }
        for i in (0..=last).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(p) => grads.g[p.0].add_assign(&gi),
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    gemm(1.0, xv, true, &gi, false, 1.0, &mut grads.g[w.0]);
                    if let Some(b) = b {
                        let gb = &mut grads.g[b.0].data;
                        for r in 0..gi.rows {
                            for (a, v) in gb.iter_mut().zip(gi.row(r)) {
                                *a += v;
                            }
                        }
                    }
                    if self.rg(*x) {
                        let wv = self.store.get(*w);
                        let mut gx = Tensor::zeros(xv.rows, xv.cols);
                        gemm(1.0, &gi, false, wv, true, 0.0, &mut gx);
                        accumulate_owned(&mut g[x.0], gx);
                    }
                }
                Op::Relu(x) => {
                    let mut gx = gi;
                    for (gv, ov) in gx.data.iter_mut().zip(&node.value.data) {
                        if *ov <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate_owned(&mut g[x.0], gx);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    mean,
                    inv_std,
                    relu,
                    batch,
                } => {
                    let xv = &self.nodes[x.0].value;
                    let cols = xv.cols;
                    let mut dy = gi;
                    if *relu {
                        for (d, o) in dy.data.iter_mut().zip(&node.value.data) {
                            if *o <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                    // Σ dy and Σ dy·x̂ over all rows: every output row depends
                    // on the statistics, including rows excluded from them.
                    let mut sum_g = vec![0.0; cols];
                    let mut sum_gh = vec![0.0; cols];
                    for (grow, xrow) in dy.data.chunks_exact(cols).zip(xv.data.chunks_exact(cols)) {
                        for c in 0..cols {
                            let h = (xrow[c] - mean[c]) * inv_std[c];
                            sum_g[c] += grow[c];
                            sum_gh[c] += grow[c] * h;
                        }
                    }
                    let gam = &self.store.get(*gamma).data;
                    if self.rg(*x) {
                        let a: Vec<f64> = gam.iter().zip(inv_std).map(|(g, s)| g * s).collect();
                        let mut gx = dy;
                        match batch {
                            None => {
                                for grow in gx.data.chunks_exact_mut(cols) {
                                    for c in 0..cols {
                                        grow[c] *= a[c];
                                    }
                                }
                            }
                            Some(mask) => {
                                let n = match mask {
                                    Some(m) => m.iter().filter(|v| **v).count(),
                                    None => xv.rows,
                                };
                                let nf = n.max(1) as f64;
                                let mg: Vec<f64> = sum_g.iter().map(|v| v / nf).collect();
                                let mgh: Vec<f64> = sum_gh.iter().map(|v| v / nf).collect();
                                for (r, (grow, xrow)) in
                                    gx.data.chunks_exact_mut(cols).zip(xv.data.chunks_exact(cols)).enumerate()
                                {
                                    if mask.as_ref().is_none_or(|m| m[r]) {
                                        for c in 0..cols {
                                            let h = (xrow[c] - mean[c]) * inv_std[c];
                                            grow[c] = a[c] * (grow[c] - mg[c] - h * mgh[c]);
                                        }
                                    } else {
                                        for c in 0..cols {
                                            grow[c] *= a[c];
                                        }
                                    }
                                }
                            }
                        }
                        accumulate_owned(&mut g[x.0], gx);
                    }
                    for (a, v) in grads.g[gamma.0].data.iter_mut().zip(&sum_gh) {
                        *a += v;
                    }
                    for (a, v) in grads.g[beta.0].data.iter_mut().zip(&sum_g) {
                        *a += v;
                    }
                }
                Op::Gather { x, idx } => {
                    let xv = &self.nodes[x.0].value;
                    let gx = g[x.0].get_or_insert_with(|| Tensor::zeros(xv.rows, xv.cols));
                    for (o, &src) in idx.iter().enumerate() {
                        let dst = gx.row_mut(src as usize);
                        for (a, v) in dst.iter_mut().zip(gi.row(o)) {
                            *a += v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let pv = &self.nodes[p.0].value;
                        if self.rg(*p) {
                            let gp = g[p.0].get_or_insert_with(|| Tensor::zeros(pv.rows, pv.cols));
                            for r in 0..pv.rows {
                                let src = &gi.row(r)[off..off + pv.cols];
                                for (a, v) in gp.row_mut(r).iter_mut().zip(src) {
                                    *a += v;
                                }
                            }
                        }
                        off += pv.cols;
                    }
                }
                Op::GroupMax { x, argmax } => {
                    let xv = &self.nodes[x.0].value;
                    let cols = xv.cols;
                    let gx = g[x.0].get_or_insert_with(|| Tensor::zeros(xv.rows, xv.cols));
                    for (k, &src) in argmax.iter().enumerate() {
                        let c = k % cols;
                        gx.data[src as usize * cols + c] += gi.data[k];
                    }
                }
                Op::Interpolate { x, idx, w } => {
                    let xv = &self.nodes[x.0].value;
                    let gx = g[x.0].get_or_insert_with(|| Tensor::zeros(xv.rows, xv.cols));
                    for (o, (ii, ww)) in idx.iter().zip(w.iter()).enumerate() {
                        let go = gi.row(o);
                        for j in 0..3 {
                            let dst = gx.row_mut(ii[j] as usize);
                            for (a, v) in dst.iter_mut().zip(go) {
                                *a += ww[j] * v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, t: &Tensor) {
    match slot {
        Some(s) => s.add_assign(t),
        None => *slot = Some(t.clone()),
    }
}

fn accumulate_owned(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(s) => s.add_assign(&t),
        None => *slot = Some(t),
    }
}

/// Applies queued running-statistics updates to the store.
pub fn apply_stat_updates(store: &mut ParamStore, updates: &[StatUpdate]) {
    for u in updates {
        for (r, b) in store.get_mut(u.mean_id).data.iter_mut().zip(&u.batch_mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, b) in store.get_mut(u.var_id).data.iter_mut().zip(&u.batch_var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Builds a small graph exercising every op and returns the scalar
    /// loss `Σ c_ij·y_ij` together with the node holding `y`.
    fn forward<'a>(store: &'a ParamStore, x: &Tensor, training: bool) -> (f64, Graph<'a>, NodeId) {
        let ids: Vec<ParamId> = (0..store.len()).map(ParamId).collect();
        let mut g = Graph::new(store, training);
        let xi = g.input(x.clone());
        let h = g.linear(xi, ids[0], Some(ids[1]));
        let mask = Rc::new((0..x.rows).map(|r| r % 5 != 4).collect::<Vec<_>>());
        let h = g.batch_norm(h, ids[2], ids[3], ids[4], ids[5], Some(mask.clone()));
        let h = g.relu(h);
        let h2 = g.linear(h, ids[7], None);
        let h = g.batch_norm_relu(h2, ids[8], ids[9], ids[10], ids[11], Some(mask));
        let idx = Rc::new(vec![0u32, 3, 4, 1, 7, 9, 5, 6]);
        let gathered = g.gather_rows(h, idx);
        let rel = g.input(Tensor::from_vec(8, 1, (0..8).map(|v| v as f64 * 0.1).collect()));
        let cat = g.concat_cols(&[rel, gathered]);
        let h2 = g.linear(cat, ids[6], None);
        let pooled = g.group_max(h2, 2);
        let iw = Rc::new(vec![[0.2, 0.3, 0.5], [0.6, 0.3, 0.1], [1.0, 0.0, 0.0]]);
        let ii = Rc::new(vec![[0u32, 1, 2], [3, 2, 1], [1, 1, 1]]);
        let y = g.interpolate(pooled, ii, iw);
        let yv = g.value(y);
        let loss: f64 = yv
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| v * ((i as f64) * 0.37).sin())
            .sum();
        (loss, g, y)
    }

    fn setup() -> (ParamStore, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::default();
        s.kaiming_uniform("fc.w", 3, 4, &mut rng);
        let b = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        s.add("fc.b", Tensor::from_vec(1, 4, b), true);
        let gm = (0..4).map(|_| rng.random_range(0.5..1.5)).collect();
        s.add("bn.gamma", Tensor::from_vec(1, 4, gm), true);
        let bt = (0..4).map(|_| rng.random_range(-0.2..0.2)).collect();
        s.add("bn.beta", Tensor::from_vec(1, 4, bt), true);
        s.add("bn.mean", Tensor::from_vec(1, 4, vec![0.1, -0.1, 0.2, 0.0]), false);
        s.add("bn.var", Tensor::from_vec(1, 4, vec![1.2, 0.8, 1.0, 1.5]), false);
        s.kaiming_uniform("fc2.w", 5, 3, &mut rng);
        s.kaiming_uniform("mid.w", 4, 4, &mut rng);
        let gm = (0..4).map(|_| rng.random_range(0.5..1.5)).collect();
        s.add("bn2.gamma", Tensor::from_vec(1, 4, gm), true);
        let bt = (0..4).map(|_| rng.random_range(-0.2..0.2)).collect();
        s.add("bn2.beta", Tensor::from_vec(1, 4, bt), true);
        s.add("bn2.mean", Tensor::from_vec(1, 4, vec![0.3, -0.1, 0.0, 0.1]), false);
        s.add("bn2.var", Tensor::from_vec(1, 4, vec![0.9, 1.1, 1.3, 0.7]), false);
        let x = Tensor::from_vec(10, 3, (0..30).map(|_| rng.random_range(-1.0..1.0)).collect());
        (s, x)
    }

    fn check_fd(training: bool) {
        let (store, x) = setup();
        let (_, g, y) = forward(&store, &x, training);
        let seed = Tensor::from_vec(
            g.value(y).rows,
            g.value(y).cols,
            (0..g.value(y).len()).map(|i| ((i as f64) * 0.37).sin()).collect(),
        );
        let mut grads = store.zero_grads();
        g.backward(&[(y, &seed)], &mut grads);
        let eps = 1e-6;
        for (pi, p) in store.params.iter().enumerate() {
            if !p.trainable {
                assert!(grads.g[pi].data.iter().all(|v| *v == 0.0));
                continue;
            }
            for k in 0..p.value.len() {
                let mut plus = store.clone();
                plus.params[pi].value.data[k] += eps;
                let mut minus = store.clone();
                minus.params[pi].value.data[k] -= eps;
                let fd = (forward(&plus, &x, training).0 - forward(&minus, &x, training).0) / (2.0 * eps);
                let an = grads.g[pi].data[k];
                let tol = 1e-6 + 1e-4 * fd.abs().max(an.abs());
                assert!((fd - an).abs() <= tol, "{} [{k}]: fd {fd} vs analytic {an}", p.name);
            }
        }
    }

    #[test]
    fn finite_differences_training_mode() {
        check_fd(true);
    }

    #[test]
    fn finite_differences_eval_mode() {
        check_fd(false);
    }

    #[test]
    fn stat_updates_queue_and_apply() {
        let (mut store, x) = setup();
        let (_, mut g, _) = forward(&store, &x, true);
        let ups = g.take_stat_updates();
        assert_eq!(ups.len(), 2);
        drop(g);
        let before = store.params[4].value.clone();
        apply_stat_updates(&mut store, &ups);
        assert_ne!(before, store.params[4].value);
        let (_, mut ge, _) = forward(&store, &x, false);
        assert!(ge.take_stat_updates().is_empty());
    }

    #[test]
    fn inputs_receive_no_gradient_path() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store, true);
        let a = g.input(Tensor::zeros(2, 2));
        let r = g.relu(a);
        let mut grads = store.zero_grads();
        g.backward(&[(r, &Tensor::from_vec(2, 2, vec![1.0; 4]))], &mut grads);
        assert!(grads.g.is_empty());
    }
}
