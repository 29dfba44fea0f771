use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Convolution + batch norm + ReLU, then max pooling, before the residual stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StemSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
}

/// A run of bottleneck blocks; the first block carries the stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageSpec {
    pub blocks: usize,
    /// Output channels of every block in the stage.
    pub width: usize,
    pub stride: usize,
}

/// Declarative bottleneck residual network ending in global average pooling
/// and an affine head.
///
/// All convolutions use `kernel / 2` zero padding and pooling uses
/// `pool_kernel / 2` padding, so a stride-2 layer maps `n` to `ceil(n / 2)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub num_classes: usize,
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    /// Ratio between a block's output width and its inner 3x3 width.
    pub bottleneck_factor: usize,
}

const RESNET50_STAGES: [(usize, usize, usize); 4] =
    [(3, 256, 1), (4, 512, 2), (6, 1024, 2), (3, 2048, 2)];

impl ModelSpec {
    /// ResNet-50 with a 10-band input and a 3x3, stride-1 stem convolution
    /// and max pool, which keeps full resolution into the first stage.
    pub fn small_stem_resnet50(num_classes: usize) -> Self {
        ModelSpec {
            in_channels: 10,
            num_classes,
            stem: StemSpec {
                out_channels: 64,
                kernel: 3,
                stride: 1,
                pool_kernel: 3,
                pool_stride: 1,
            },
            stages: RESNET50_STAGES
                .iter()
                .map(|&(blocks, width, stride)| StageSpec { blocks, width, stride })
                .collect(),
            bottleneck_factor: 4,
        }
    }

    /// The unmodified ResNet-50 stem (7x7 stride-2 convolution, 3x3 stride-2
    /// pool), as a reference point for the small-stem variant.
    pub fn standard_resnet50(in_channels: usize, num_classes: usize) -> Self {
        ModelSpec {
            in_channels,
            stem: StemSpec {
                out_channels: 64,
                kernel: 7,
                stride: 2,
                pool_kernel: 3,
                pool_stride: 2,
            },
            ..Self::small_stem_resnet50(num_classes)
        }
    }

    /// One block per stage, eight channels throughout; the desk-scale
    /// architecture used on synthetic fixtures and in gradient checks.
    pub fn tiny(num_classes: usize) -> Self {
        ModelSpec {
            in_channels: 10,
            num_classes,
            stem: StemSpec {
                out_channels: 8,
                kernel: 3,
                stride: 1,
                pool_kernel: 3,
                pool_stride: 1,
            },
            stages: [1, 2, 2, 2]
                .iter()
                .map(|&stride| StageSpec {
                    blocks: 1,
                    width: 8,
                    stride,
                })
                .collect(),
            bottleneck_factor: 4,
        }
    }

    pub fn with_num_classes(&self, num_classes: usize) -> Self {
        ModelSpec {
            num_classes,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.in_channels == 0 || self.num_classes == 0 {
            return fail("in_channels and num_classes must be positive".into());
        }
        let s = &self.stem;
        if s.out_channels == 0 || s.kernel == 0 || s.stride == 0 || s.pool_kernel == 0 || s.pool_stride == 0 {
            return fail("stem sizes must be positive".into());
        }
        if s.kernel % 2 == 0 || s.pool_kernel % 2 == 0 {
            return fail("stem kernels must be odd".into());
        }
        if self.stages.is_empty() {
            return fail("at least one stage is required".into());
        }
        if self.bottleneck_factor == 0 {
            return fail("bottleneck factor must be positive".into());
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.blocks == 0 || st.stride == 0 {
                return fail(format!("stage {i}: blocks and stride must be positive"));
            }
            if st.width % self.bottleneck_factor != 0 {
                return fail(format!(
                    "stage {i}: width {} not divisible by bottleneck factor {}",
                    st.width, self.bottleneck_factor
                ));
            }
        }
        Ok(())
    }

    pub fn feature_channels(&self) -> usize {
        self.stages.last().map(|s| s.width).unwrap_or(self.stem.out_channels)
    }

    pub fn total_blocks(&self) -> usize {
        self.stages.iter().map(|s| s.blocks).sum()
    }

    /// Spatial size after the stem convolution, after the pool, and after each
    /// stage, for a square `input` edge.
    pub fn spatial_sizes(&self, input: usize) -> Vec<usize> {
        let out = |n: usize, k: usize, s: usize| (n + 2 * (k / 2) - k) / s + 1;
        let mut sizes = Vec::with_capacity(self.stages.len() + 2);
        let conv = out(input, self.stem.kernel, self.stem.stride);
        let pool = out(conv, self.stem.pool_kernel, self.stem.pool_stride);
        sizes.push(conv);
        sizes.push(pool);
        let mut n = pool;
        for st in &self.stages {
            n = out(n, 3, st.stride);
            sizes.push(n);
        }
        sizes
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// True when the specs differ at most in `num_classes`.
    pub fn same_backbone(&self, other: &ModelSpec) -> bool {
        self.with_num_classes(0) == other.with_num_classes(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resnet50_layout() {
        let spec = ModelSpec::small_stem_resnet50(11);
        spec.validate().unwrap();
        assert_eq!(spec.total_blocks(), 16);
        assert_eq!(spec.feature_channels(), 2048);
        assert_eq!(spec.stem.stride, 1);
        assert_eq!(spec.stem.pool_stride, 1);
    }

    #[test]
    fn spatial_sizes_small_vs_standard_stem() {
        // stem conv, pool, then the four stages
        assert_eq!(
            ModelSpec::small_stem_resnet50(11).spatial_sizes(100),
            vec![100, 100, 100, 50, 25, 13]
        );
        assert_eq!(
            ModelSpec::standard_resnet50(10, 11).spatial_sizes(100),
            vec![50, 25, 25, 13, 7, 4]
        );
    }

    #[test]
    fn rejects_indivisible_width() {
        let mut spec = ModelSpec::tiny(3);
        spec.stages[2].width = 6;
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ModelSpec::tiny(3);
        assert_eq!(a.hash(), ModelSpec::tiny(3).hash());
        assert_ne!(a.hash(), ModelSpec::tiny(4).hash());
        assert!(a.same_backbone(&ModelSpec::tiny(4)));
        assert!(!a.same_backbone(&ModelSpec::small_stem_resnet50(3)));
    }
}
