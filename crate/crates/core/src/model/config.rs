use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BoxCodecConfig;

/// One set-abstraction level with two grouping scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaLevelConfig {
    /// Number of sampled centers.
    pub num_centers: usize,
    /// Grouping radius per scale, in meters.
    pub radii: [f64; 2],
    /// Neighbors kept per group, per scale.
    pub group_sizes: [usize; 2],
    /// Widths of the three-layer stack per scale.
    pub mlps: [Vec<usize>; 2],
}

impl SaLevelConfig {
    pub fn out_dim(&self) -> usize {
        self.mlps.iter().map(|m| *m.last().unwrap_or(&0)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Set-abstraction levels from finest to coarsest.
    pub sa: Vec<SaLevelConfig>,
    /// Feature-propagation widths, from the coarsest level back to the
    /// input points. The last width of the last entry is the shared feature
    /// width.
    pub fp: Vec<Vec<usize>>,
    /// Hidden width of both task heads.
    pub head_width: usize,
    pub num_classes: usize,
    /// Width of the fused semantic summary.
    pub sff_dim: usize,
    /// Build the proposal head.
    pub det_head: bool,
    /// Feed the semantic summary into the proposal head.
    pub sff: bool,
    pub codec: BoxCodecConfig,
    /// Seed for the sampling start direction.
    pub sampling_seed: u64,
}

/// Per-point input channels: `x, y, z, reflectance`.
pub const INPUT_FEATURES: usize = 4;

impl Default for ModelConfig {
    fn default() -> Self {
        let level = |num_centers, radii, mlps: [Vec<usize>; 2]| SaLevelConfig {
            num_centers,
            radii,
            group_sizes: [8, 16],
            mlps,
        };
        ModelConfig {
            sa: vec![
                level(512, [1.0, 2.5], [vec![16, 16, 32], vec![16, 16, 32]]),
                level(128, [2.5, 5.0], [vec![32, 32, 64], vec![32, 32, 64]]),
                level(32, [5.0, 10.0], [vec![48, 48, 96], vec![48, 48, 96]]),
                level(8, [10.0, 20.0], [vec![64, 64, 128], vec![64, 64, 128]]),
            ],
            fp: vec![vec![128], vec![128], vec![128], vec![128]],
            head_width: 128,
            num_classes: 8,
            sff_dim: 4,
            det_head: true,
            sff: true,
            codec: BoxCodecConfig::default(),
            sampling_seed: 0,
        }
    }
}

impl ModelConfig {
    /// A very small network for gradient checks and fast tests.
    pub fn tiny(num_classes: usize) -> Self {
        let level = |num_centers, radii, group_sizes, w: usize| SaLevelConfig {
            num_centers,
            radii,
            group_sizes,
            mlps: [vec![w, w, w], vec![w, w, w]],
        };
        ModelConfig {
            sa: vec![
                level(16, [1.5, 3.0], [3, 4], 4),
                level(8, [3.0, 6.0], [3, 4], 4),
                level(4, [6.0, 12.0], [2, 3], 4),
                level(2, [12.0, 24.0], [2, 2], 4),
            ],
            fp: vec![vec![8], vec![8], vec![8], vec![8]],
            head_width: 8,
            num_classes,
            sff_dim: 3,
            det_head: true,
            sff: true,
            codec: BoxCodecConfig::default(),
            sampling_seed: 0,
        }
    }

    pub fn shared_dim(&self) -> usize {
        self.fp.last().and_then(|f| f.last()).copied().unwrap_or(0)
    }

    pub fn det_channels(&self) -> usize {
        self.codec.det_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sa.len() != 4 || self.fp.len() != 4 {
            return bad(format!(
                "expected 4 set-abstraction and 4 propagation levels, got {} and {}",
                self.sa.len(),
                self.fp.len()
            ));
        }
        for (i, l) in self.sa.iter().enumerate() {
            if l.num_centers == 0 {
                return bad(format!("sa[{i}]: num_centers must be positive"));
            }
            if i > 0 && l.num_centers >= self.sa[i - 1].num_centers {
                return bad(format!("sa[{i}]: group sizes must be strictly decreasing"));
            }
            if l.radii.iter().any(|r| !(*r > 0.0)) || l.group_sizes.contains(&0) {
                return bad(format!("sa[{i}]: radii and group sizes must be positive"));
            }
            if l.mlps.iter().any(|m| m.is_empty() || m.contains(&0)) {
                return bad(format!("sa[{i}]: layer widths must be non-empty and positive"));
            }
        }
        if self.fp.iter().any(|f| f.is_empty() || f.contains(&0)) {
            return bad("fp widths must be non-empty and positive".into());
        }
        if self.head_width == 0 || self.num_classes < 2 {
            return bad("head_width must be positive and num_classes at least 2".into());
        }
        if self.sff && (!self.det_head || self.sff_dim == 0) {
            return bad("sff requires the proposal head and a positive sff_dim".into());
        }
        self.codec.validate()
    }
}
