use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::spec::ModelSpec;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::seed;

/// Convolution weight plus the batch norm that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn<T> {
    /// `[out, in, k, k]`
    pub weight: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Scalar> ConvBn<T> {
    fn zeros(cout: usize, cin: usize, k: usize) -> Self {
        ConvBn {
            weight: Tensor::zeros(&[cout, cin, k, k]),
            gamma: Tensor::filled(&[cout], T::one()),
            beta: Tensor::zeros(&[cout]),
            running_mean: Tensor::zeros(&[cout]),
            running_var: Tensor::filled(&[cout], T::one()),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck<T> {
    pub stride: usize,
    pub conv1: ConvBn<T>,
    pub conv2: ConvBn<T>,
    pub conv3: ConvBn<T>,
    /// Projection shortcut, present when the block changes stride or width.
    pub downsample: Option<ConvBn<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Batch-norm running statistics.
    Buffer,
}

/// Weights of a [`ModelSpec`] network plus provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub spec: ModelSpec,
    pub spec_hash: String,
    pub init_seed: u64,
    pub metadata: BTreeMap<String, String>,
    pub stem: ConvBn<T>,
    /// Blocks grouped by stage.
    pub stages: Vec<Vec<Bottleneck<T>>>,
    /// `[num_classes, feature_channels]`
    pub head_weight: Tensor<T>,
    pub head_bias: Tensor<T>,
}

/// Gradients in [`ModelParams::trainable`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T>(pub Vec<Tensor<T>>);

impl<T: Scalar> ModelParams<T> {
    /// All tensors set to the batch-norm identity and zero weights.
    pub fn skeleton(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let stem = ConvBn::zeros(spec.stem.out_channels, spec.in_channels, spec.stem.kernel);
        let mut cin = spec.stem.out_channels;
        let mut stages = Vec::with_capacity(spec.stages.len());
        for st in &spec.stages {
            let mid = st.width / spec.bottleneck_factor;
            let mut blocks = Vec::with_capacity(st.blocks);
            for b in 0..st.blocks {
                let stride = if b == 0 { st.stride } else { 1 };
                let downsample = (stride != 1 || cin != st.width).then(|| ConvBn::zeros(st.width, cin, 1));
                blocks.push(Bottleneck {
                    stride,
                    conv1: ConvBn::zeros(mid, cin, 1),
                    conv2: ConvBn::zeros(mid, mid, 3),
                    conv3: ConvBn::zeros(st.width, mid, 1),
                    downsample,
                });
                cin = st.width;
            }
            stages.push(blocks);
        }
        Ok(ModelParams {
            spec: spec.clone(),
            spec_hash: spec.hash(),
            init_seed: 0,
            metadata: BTreeMap::new(),
            stem,
            stages,
            head_weight: Tensor::zeros(&[spec.num_classes, cin]),
            head_bias: Tensor::zeros(&[spec.num_classes]),
        })
    }

    /// Every tensor with its checkpoint name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor<T>, ParamKind)> {
        let mut out = Vec::new();
        fn push_cb<'a, T>(out: &mut Vec<(String, &'a Tensor<T>, ParamKind)>, conv: &str, bn: &str, cb: &'a ConvBn<T>) {
            out.push((format!("{conv}.weight"), &cb.weight, ParamKind::Trainable));
            out.push((format!("{bn}.weight"), &cb.gamma, ParamKind::Trainable));
            out.push((format!("{bn}.bias"), &cb.beta, ParamKind::Trainable));
            out.push((format!("{bn}.running_mean"), &cb.running_mean, ParamKind::Buffer));
            out.push((format!("{bn}.running_var"), &cb.running_var, ParamKind::Buffer));
        }
        push_cb(&mut out, "conv1", "bn1", &self.stem);
        for (s, blocks) in self.stages.iter().enumerate() {
            for (b, blk) in blocks.iter().enumerate() {
                let p = format!("layer{}.{b}", s + 1);
                push_cb(&mut out, &format!("{p}.conv1"), &format!("{p}.bn1"), &blk.conv1);
                push_cb(&mut out, &format!("{p}.conv2"), &format!("{p}.bn2"), &blk.conv2);
                push_cb(&mut out, &format!("{p}.conv3"), &format!("{p}.bn3"), &blk.conv3);
                if let Some(d) = &blk.downsample {
                    push_cb(&mut out, &format!("{p}.downsample.0"), &format!("{p}.downsample.1"), d);
                }
            }
        }
        out.push(("fc.weight".into(), &self.head_weight, ParamKind::Trainable));
        out.push(("fc.bias".into(), &self.head_bias, ParamKind::Trainable));
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<(&mut Tensor<T>, ParamKind)> {
        let mut out = Vec::new();
        fn push_cb<'a, T>(out: &mut Vec<(&'a mut Tensor<T>, ParamKind)>, cb: &'a mut ConvBn<T>) {
            out.push((&mut cb.weight, ParamKind::Trainable));
            out.push((&mut cb.gamma, ParamKind::Trainable));
            out.push((&mut cb.beta, ParamKind::Trainable));
            out.push((&mut cb.running_mean, ParamKind::Buffer));
            out.push((&mut cb.running_var, ParamKind::Buffer));
        }
        push_cb(&mut out, &mut self.stem);
        for blocks in &mut self.stages {
            for blk in blocks {
                push_cb(&mut out, &mut blk.conv1);
                push_cb(&mut out, &mut blk.conv2);
                push_cb(&mut out, &mut blk.conv3);
                if let Some(d) = &mut blk.downsample {
                    push_cb(&mut out, d);
                }
            }
        }
        out.push((&mut self.head_weight, ParamKind::Trainable));
        out.push((&mut self.head_bias, ParamKind::Trainable));
        out
    }

    pub fn trainable(&self) -> Vec<&Tensor<T>> {
        self.named()
            .into_iter()
            .filter(|(_, _, k)| *k == ParamKind::Trainable)
            .map(|(_, t, _)| t)
            .collect()
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.named()
            .into_iter()
            .filter(|(_, _, k)| *k == ParamKind::Trainable)
            .map(|(n, _, _)| n)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.tensors_mut()
            .into_iter()
            .filter(|(_, k)| *k == ParamKind::Trainable)
            .map(|(t, _)| t)
            .collect()
    }

    /// Number of trainable tensors belonging to the head (always the last two).
    pub const HEAD_TENSORS: usize = 2;

    pub fn num_trainable_scalars(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients(self.trainable().iter().map(|t| Tensor::zeros(&t.shape)).collect())
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Bottleneck<T>> {
        self.stages.iter().flatten()
    }

    /// Checks tensor shapes and the stored spec hash against the spec.
    pub fn validate(&self) -> Result<()> {
        if self.spec_hash != self.spec.hash() {
            return Err(Error::Spec(format!(
                "spec hash mismatch: params carry {}, spec hashes to {}",
                self.spec_hash,
                self.spec.hash()
            )));
        }
        let reference = ModelParams::<T>::skeleton(&self.spec)?;
        let mine = self.named();
        let want = reference.named();
        if mine.len() != want.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, found {}",
                want.len(),
                mine.len()
            )));
        }
        for ((name, t, _), (wname, w, _)) in mine.iter().zip(&want) {
            if name != wname || t.shape != w.shape || t.data.len() != w.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {name} has shape {:?}, expected {wname} {:?}",
                    t.shape, w.shape
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let cb = |c: &ConvBn<T>| ConvBn {
            weight: c.weight.cast(),
            gamma: c.gamma.cast(),
            beta: c.beta.cast(),
            running_mean: c.running_mean.cast(),
            running_var: c.running_var.cast(),
        };
        ModelParams {
            spec: self.spec.clone(),
            spec_hash: self.spec_hash.clone(),
            init_seed: self.init_seed,
            metadata: self.metadata.clone(),
            stem: cb(&self.stem),
            stages: self
                .stages
                .iter()
                .map(|blocks| {
                    blocks
                        .iter()
                        .map(|b| Bottleneck {
                            stride: b.stride,
                            conv1: cb(&b.conv1),
                            conv2: cb(&b.conv2),
                            conv3: cb(&b.conv3),
                            downsample: b.downsample.as_ref().map(cb),
                        })
                        .collect()
                })
                .collect(),
            head_weight: self.head_weight.cast(),
            head_bias: self.head_bias.cast(),
        }
    }

    fn init_head(&mut self, seed: u64) {
        let mut rng = seed::rng(seed, 0x4ead);
        let bound = 1.0 / (self.head_weight.shape[1] as f64).sqrt();
        for v in &mut self.head_weight.data {
            *v = T::from_f64_lossy(rng.random_range(-bound..bound));
        }
        self.head_bias.data.fill(T::zero());
    }
}

fn kaiming<T: Scalar>(w: &mut Tensor<T>, rng: &mut impl Rng) {
    let fan_in: usize = w.shape[1..].iter().product();
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    for v in &mut w.data {
        *v = T::from_f64_lossy(normal.sample(rng));
    }
}

/// Builds and initializes parameters: He-normal convolutions, unit/zero batch
/// norm, zero scale on each block's last batch norm, uniform head in
/// `±1/sqrt(features)` with zero bias.
pub fn build_model<T: Scalar>(spec: &ModelSpec, init_seed: u64) -> Result<ModelParams<T>> {
    let mut p = ModelParams::<T>::skeleton(spec)?;
    p.init_seed = init_seed;
    let mut rng = seed::rng(init_seed, 0);
    kaiming(&mut p.stem.weight, &mut rng);
    for blk in p.stages.iter_mut().flatten() {
        kaiming(&mut blk.conv1.weight, &mut rng);
        kaiming(&mut blk.conv2.weight, &mut rng);
        kaiming(&mut blk.conv3.weight, &mut rng);
        blk.conv3.gamma.data.fill(T::zero());
        if let Some(d) = &mut blk.downsample {
            kaiming(&mut d.weight, &mut rng);
        }
    }
    p.init_head(init_seed);
    Ok(p)
}

/// Copies every backbone tensor of `source` and draws a fresh head for
/// `target`, which may differ from the source spec only in `num_classes`.
pub fn transfer_into<T: Scalar>(source: &ModelParams<T>, target: &ModelSpec, seed: u64) -> Result<ModelParams<T>> {
    source.validate()?;
    target.validate()?;
    if !source.spec.same_backbone(target) {
        return Err(Error::Spec(
            "pretrained backbone is incompatible with the target architecture".into(),
        ));
    }
    let mut out = source.clone();
    out.spec = target.clone();
    out.spec_hash = target.hash();
    out.head_weight = Tensor::zeros(&[target.num_classes, target.feature_channels()]);
    out.head_bias = Tensor::zeros(&[target.num_classes]);
    out.init_head(seed);
    out.metadata
        .insert("transferred_from".into(), source.spec_hash.clone());
    out.validate()?;
    Ok(out)
}

/// Same backbone, new head with `new_num_classes` outputs.
pub fn transfer_head<T: Scalar>(source: &ModelParams<T>, new_num_classes: usize, seed: u64) -> Result<ModelParams<T>> {
    transfer_into(source, &source.spec.with_num_classes(new_num_classes), seed)
}
