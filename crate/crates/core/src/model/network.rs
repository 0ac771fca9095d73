use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, INPUT_FEATURES};
use super::sampling::{ball_query_multi, farthest_point_sample, three_nn};
use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::nn::{Dense, Graph, Mlp, NodeId, ParamStore, Tensor};

/// Neighborhood structure of one set-abstraction level for a whole batch.
#[derive(Debug, Clone)]
struct LevelPlan {
    groups: [Rc<Vec<u32>>; 2],
    /// Neighbor offsets from the group center, divided by the radius.
    rel: [Tensor; 2],
}

/// Geometry of a batch of clouds, precomputed once per forward pass:
/// sampled centers, neighborhoods and interpolation weights. Scenes are
/// stacked row-wise.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    /// Level-0 row offset of each scene; `num_scenes + 1` entries.
    pub offsets: Vec<usize>,
    /// Level-0 input features `(x, y, z, reflectance)`.
    pub input: Tensor,
    /// Level-0 rows that are real points (not padding).
    pub mask: Rc<Vec<bool>>,
    /// Level-0 coordinates.
    pub xyz: Vec<[f64; 3]>,
    levels: Vec<LevelPlan>,
    /// Fine level `l` to coarse level `l + 1`.
    interp: Vec<(Rc<Vec<[u32; 3]>>, Rc<Vec<[f64; 3]>>)>,
}

impl PreparedBatch {
    pub fn num_scenes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn rows(&self) -> usize {
        self.input.rows
    }

    /// Level-0 row range of scene `b`.
    pub fn scene_rows(&self, b: usize) -> std::ops::Range<usize> {
        self.offsets[b]..self.offsets[b + 1]
    }
}

struct ScenePlan {
    /// Coordinates per level, level 0 = all input rows.
    xyz: Vec<Vec<[f64; 3]>>,
    /// Per SA level and scale: neighbor indices into the previous level.
    groups: Vec<[Vec<u32>; 2]>,
    /// Per SA level: center indices into the previous level.
    centers: Vec<Vec<usize>>,
    interp: Vec<(Vec<[u32; 3]>, Vec<[f64; 3]>)>,
}

fn plan_scene(cfg: &ModelConfig, cloud: &PointCloud) -> Result<ScenePlan> {
    if cloud.valid_count == 0 {
        return Err(Error::Data("cannot run the encoder on a cloud without valid points".into()));
    }
    let mut xyz = vec![cloud.points.iter().map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>()];
    let mut groups = Vec::with_capacity(4);
    let mut centers = Vec::with_capacity(4);
    for (l, level) in cfg.sa.iter().enumerate() {
        // Padding rows never take part in sampling or grouping.
        let prev = if l == 0 { &xyz[0][..cloud.valid_count] } else { &xyz[l][..] };
        let c = farthest_point_sample(prev, level.num_centers, cfg.sampling_seed.wrapping_add(l as u64))?;
        let scales = [
            (level.radii[0], level.group_sizes[0]),
            (level.radii[1], level.group_sizes[1]),
        ];
        let mut g = ball_query_multi(prev, &c, &scales);
        let g1 = g.pop().unwrap_or_default();
        let g0 = g.pop().unwrap_or_default();
        let next: Vec<[f64; 3]> = c.iter().map(|&i| prev[i]).collect();
        groups.push([g0, g1]);
        centers.push(c);
        xyz.push(next);
    }
    let interp = (0..4).map(|l| three_nn(&xyz[l], &xyz[l + 1])).collect();
    Ok(ScenePlan {
        xyz,
        groups,
        centers,
        interp,
    })
}

/// Shared point-set encoder-decoder.
#[derive(Debug, Clone)]
struct Encoder {
    sa: Vec<[Mlp; 2]>,
    fp: Vec<Mlp>,
}

#[derive(Debug, Clone)]
struct Head {
    hidden: Mlp,
    out: Dense,
}

impl Head {
    fn forward(&self, g: &mut Graph<'_>, x: NodeId, mask: Option<Rc<Vec<bool>>>) -> NodeId {
        let h = self.hidden.forward(g, x, mask);
        self.out.forward(g, h)
    }
}

#[derive(Debug, Clone)]
struct DetBranch {
    sff: Option<Dense>,
    head: Head,
}

/// Outputs of one recorded forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub shared: NodeId,
    pub seg: Option<NodeId>,
    pub det: Option<NodeId>,
}

/// Per-scene inference outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub seg_logits: Tensor,
    pub det: Option<Tensor>,
}

/// The full network: encoder, semantic head and optional proposal head.
#[derive(Debug, Clone)]
pub struct DassModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    encoder: Encoder,
    seg: Head,
    det: Option<DetBranch>,
    /// Parameters before this index belong to the encoder and semantic head;
    /// the rest belong to the proposal branch.
    seg_params: usize,
}

impl DassModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let mut sa = Vec::with_capacity(4);
        let mut dims = vec![INPUT_FEATURES];
        for (l, level) in config.sa.iter().enumerate() {
            let in_dim = 3 + dims[l];
            let m0 = Mlp::new(&mut store, &format!("encoder.sa{l}.scale0"), in_dim, &level.mlps[0], &mut rng);
            let m1 = Mlp::new(&mut store, &format!("encoder.sa{l}.scale1"), in_dim, &level.mlps[1], &mut rng);
            dims.push(level.out_dim());
            sa.push([m0, m1]);
        }
        let mut fp = Vec::with_capacity(4);
        let mut cur = dims[4];
        for (j, widths) in config.fp.iter().enumerate() {
            let fine = 3 - j;
            let mlp = Mlp::new(&mut store, &format!("encoder.fp{j}"), cur + dims[fine], widths, &mut rng);
            cur = mlp.out_dim();
            fp.push(mlp);
        }
        let c = config.shared_dim();
        let seg = Head {
            hidden: Mlp::new(&mut store, "seg_head.hidden", c, &[config.head_width], &mut rng),
            out: Dense::new(&mut store, "seg_head.out", config.head_width, config.num_classes, true, &mut rng),
        };
        let seg_params = store.len();
        let det = config.det_head.then(|| {
            let sff = config
                .sff
                .then(|| Dense::new(&mut store, "sff.fc", config.num_classes, config.sff_dim, true, &mut rng));
            let in_dim = c + if config.sff { config.sff_dim } else { 0 };
            let head = Head {
                hidden: Mlp::new(&mut store, "det_head.hidden", in_dim, &[config.head_width], &mut rng),
                out: Dense::new(&mut store, "det_head.out", config.head_width, config.det_channels(), true, &mut rng),
            };
            DetBranch { sff, head }
        });
        Ok(DassModel {
            config,
            store,
            encoder: Encoder { sa, fp },
            seg,
            det,
            seg_params,
        })
    }

    pub fn has_det_head(&self) -> bool {
        self.det.is_some()
    }

    pub fn has_sff(&self) -> bool {
        self.det.as_ref().is_some_and(|d| d.sff.is_some())
    }

    /// Trainable scalars of the whole model.
    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    /// Trainable scalars of the proposal branch (semantic fusion included).
    pub fn det_head_param_count(&self) -> usize {
        self.store.params[self.seg_params..]
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Index of the first proposal-branch parameter in the store.
    pub fn det_param_start(&self) -> usize {
        self.seg_params
    }

    /// Ids of the semantic-head parameters.
    pub fn seg_head_param_range(&self) -> std::ops::Range<usize> {
        let first = self
            .store
            .params
            .iter()
            .position(|p| p.name.starts_with("seg_head."))
            .unwrap_or(self.seg_params);
        first..self.seg_params
    }

    /// The segmentation-only model: the proposal branch and its parameters
    /// are removed, everything else is copied unchanged.
    pub fn detach_det_head(&self) -> DassModel {
        let mut m = self.clone();
        m.store.truncate(self.seg_params);
        m.det = None;
        m.config.det_head = false;
        m.config.sff = false;
        m
    }

    /// Samples, groups and stacks a batch of clouds.
    pub fn prepare(&self, clouds: &[&PointCloud]) -> Result<PreparedBatch> {
        if clouds.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let plans = clouds
            .iter()
            .map(|c| plan_scene(&self.config, c))
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = vec![0; 5];
        let mut level_offsets: Vec<Vec<usize>> = Vec::with_capacity(plans.len());
        for p in &plans {
            level_offsets.push(offsets.clone());
            for (l, o) in offsets.iter_mut().enumerate() {
                *o += p.xyz[l].len();
            }
        }
        let total0 = offsets[0];
        let mut input = Tensor::zeros(total0, INPUT_FEATURES);
        let mut mask = Vec::with_capacity(total0);
        let mut xyz0 = Vec::with_capacity(total0);
        let mut row_offsets = vec![0];
        for (b, cloud) in clouds.iter().enumerate() {
            let base = level_offsets[b][0];
            for (i, p) in cloud.points.iter().enumerate() {
                input.row_mut(base + i).copy_from_slice(p);
                mask.push(i < cloud.valid_count);
                xyz0.push([p[0], p[1], p[2]]);
            }
            row_offsets.push(base + cloud.points.len());
        }
        let mut levels = Vec::with_capacity(4);
        for (l, level) in self.config.sa.iter().enumerate() {
            let mut groups: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
            let mut rel: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for (b, p) in plans.iter().enumerate() {
                let prev_off = level_offsets[b][l] as u32;
                for s in 0..2 {
                    let k = level.group_sizes[s];
                    let inv_r = 1.0 / level.radii[s];
                    for (ci, &c) in p.centers[l].iter().enumerate() {
                        let cp = p.xyz[l][c];
                        for &nb in &p.groups[l][s][ci * k..(ci + 1) * k] {
                            let q = p.xyz[l][nb as usize];
                            groups[s].push(nb + prev_off);
                            rel[s].extend_from_slice(&[
                                (q[0] - cp[0]) * inv_r,
                                (q[1] - cp[1]) * inv_r,
                                (q[2] - cp[2]) * inv_r,
                            ]);
                        }
                    }
                }
            }
            let [g0, g1] = groups;
            let [r0, r1] = rel;
            let n0 = g0.len();
            let n1 = g1.len();
            levels.push(LevelPlan {
                groups: [Rc::new(g0), Rc::new(g1)],
                rel: [Tensor::from_vec(n0, 3, r0), Tensor::from_vec(n1, 3, r1)],
            });
        }
        let mut interp = Vec::with_capacity(4);
        for l in 0..4 {
            let mut idx = Vec::with_capacity(offsets[l]);
            let mut w = Vec::with_capacity(offsets[l]);
            for (b, p) in plans.iter().enumerate() {
                let coarse_off = level_offsets[b][l + 1] as u32;
                idx.extend(p.interp[l].0.iter().map(|t| [t[0] + coarse_off, t[1] + coarse_off, t[2] + coarse_off]));
                w.extend_from_slice(&p.interp[l].1);
            }
            interp.push((Rc::new(idx), Rc::new(w)));
        }
        Ok(PreparedBatch {
            offsets: row_offsets,
            input,
            mask: Rc::new(mask),
            xyz: xyz0,
            levels,
            interp,
        })
    }

    /// Shared per-point features, `rows × shared_dim`.
    pub fn encode(&self, g: &mut Graph<'_>, batch: &PreparedBatch) -> NodeId {
        let mut feats = vec![g.input(batch.input.clone())];
        for (l, mlps) in self.encoder.sa.iter().enumerate() {
            let plan = &batch.levels[l];
            let mut pooled = Vec::with_capacity(2);
            for s in 0..2 {
                let k = self.config.sa[l].group_sizes[s];
                let gathered = g.gather_rows(feats[l], plan.groups[s].clone());
                let rel = g.input(plan.rel[s].clone());
                let h = g.concat_cols(&[rel, gathered]);
                let h = mlps[s].forward(g, h, None);
                pooled.push(g.group_max(h, k));
            }
            feats.push(g.concat_cols(&pooled));
        }
        let mut cur = feats[4];
        for (j, mlp) in self.encoder.fp.iter().enumerate() {
            let fine = 3 - j;
            let (idx, w) = &batch.interp[fine];
            let up = g.interpolate(cur, idx.clone(), w.clone());
            let h = g.concat_cols(&[up, feats[fine]]);
            let mask = (fine == 0).then(|| batch.mask.clone());
            cur = mlp.forward(g, h, mask);
        }
        cur
    }

    /// Semantic logits from shared features.
    pub fn seg_head(&self, g: &mut Graph<'_>, shared: NodeId, batch: &PreparedBatch) -> NodeId {
        self.seg.forward(g, shared, Some(batch.mask.clone()))
    }

    /// Semantic likelihoods of the shared features, computed on a separate
    /// throwaway graph: nothing recorded here can carry a gradient back into
    /// the semantic head or the encoder. Running statistics are not updated.
    pub fn seg_likelihoods_detached(&self, g: &Graph<'_>, shared: NodeId, batch: &PreparedBatch) -> Tensor {
        let mut side = Graph::new(g.store(), g.training());
        side.record_stats = false;
        let f = side.input(g.value(shared).clone());
        let logits = self.seg.forward(&mut side, f, Some(batch.mask.clone()));
        side.value(logits).softmax_rows()
    }

    /// Compact semantic summary fed to the proposal head; `None` without
    /// fusion.
    pub fn sff_features(&self, g: &mut Graph<'_>, shared: NodeId, batch: &PreparedBatch) -> Option<NodeId> {
        let sff = self.det.as_ref()?.sff.as_ref()?;
        let lik = self.seg_likelihoods_detached(g, shared, batch);
        let lik = g.input(lik);
        let s = sff.forward(g, lik);
        Some(g.relu(s))
    }

    /// Proposal-head output; `None` when the model has no proposal head.
    pub fn det_head(&self, g: &mut Graph<'_>, shared: NodeId, batch: &PreparedBatch) -> Option<NodeId> {
        let det = self.det.as_ref()?;
        let input = match self.sff_features(g, shared, batch) {
            Some(s) => g.concat_cols(&[shared, s]),
            None => shared,
        };
        Some(det.head.forward(g, input, Some(batch.mask.clone())))
    }

    /// Records a forward pass computing the requested heads.
    pub fn forward(&self, g: &mut Graph<'_>, batch: &PreparedBatch, seg: bool, det: bool) -> Forward {
        let shared = self.encode(g, batch);
        let seg = seg.then(|| self.seg_head(g, shared, batch));
        let det = if det { self.det_head(g, shared, batch) } else { None };
        Forward { shared, seg, det }
    }

    /// Inference with running statistics; one [`Prediction`] per cloud.
    pub fn predict(&self, clouds: &[&PointCloud]) -> Result<Vec<Prediction>> {
        let batch = self.prepare(clouds)?;
        let mut g = Graph::new(&self.store, false);
        let out = self.forward(&mut g, &batch, true, true);
        let seg = g.value(out.seg.expect("semantic head always present"));
        let det = out.det.map(|d| g.value(d));
        let preds = (0..batch.num_scenes())
            .map(|b| {
                let rows: Vec<usize> = batch.scene_rows(b).collect();
                Prediction {
                    seg_logits: seg.select_rows(&rows),
                    det: det.map(|d| d.select_rows(&rows)),
                }
            })
            .collect();
        Ok(preds)
    }
}
