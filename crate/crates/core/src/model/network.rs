use super::ops::{
    add_inplace, add_relu_inplace, bn_affine, bn_backward, bn_eval, bn_normalize, conv_backward, conv_forward,
    global_avg_pool, global_avg_pool_backward, linear_backward, linear_forward, maxpool_backward, maxpool_forward,
    relu_backward_inplace, BnBatchStats, BnCache, BN_MOMENTUM,
};
use super::params::{Bottleneck, ConvBn, Gradients, ModelParams};
use super::tensor::{Activation, Scalar, Tensor};
use crate::error::{Error, Result};

struct BlockTape<T> {
    bn1: BnCache<T>,
    r1: Activation<T>,
    bn2: BnCache<T>,
    r2: Activation<T>,
    bn3: BnCache<T>,
    down: Option<BnCache<T>>,
    out: Activation<T>,
}

/// Intermediate values of a training-mode forward pass.
pub struct Tape<T> {
    input_shape: [usize; 4],
    stem_bn: BnCache<T>,
    stem_relu: Activation<T>,
    pool_idx: Vec<u32>,
    pool_out: Activation<T>,
    blocks: Vec<BlockTape<T>>,
    feat: Tensor<T>,
    /// Batch statistics of every batch-norm layer, in parameter order.
    pub bn_stats: Vec<BnBatchStats>,
}

/// Output of [`ModelParams::forward_train`]: logits `[n, classes]` and the tape.
pub struct TrainForward<T> {
    pub logits: Tensor<T>,
    pub tape: Tape<T>,
}

fn check_input<T: Scalar>(p: &ModelParams<T>, x: &Activation<T>) -> Result<()> {
    if x.c != p.spec.in_channels {
        return Err(Error::Shape(format!(
            "input has {} channels, model expects {}",
            x.c, p.spec.in_channels
        )));
    }
    if x.n == 0 || x.h == 0 || x.w == 0 {
        return Err(Error::Shape("empty input batch".into()));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model input".into()));
    }
    Ok(())
}

fn cb_train<T: Scalar>(
    x: &Activation<T>,
    cb: &ConvBn<T>,
    stride: usize,
    relu: bool,
    stats: &mut Vec<BnBatchStats>,
) -> (BnCache<T>, Activation<T>) {
    let z = conv_forward(x, &cb.weight, stride);
    let (cache, s) = bn_normalize(&z);
    stats.push(s);
    let y = bn_affine(&cache.xhat, &cb.gamma, &cb.beta, relu);
    (cache, y)
}

fn cb_eval<T: Scalar>(x: &Activation<T>, cb: &ConvBn<T>, stride: usize, relu: bool) -> Activation<T> {
    let z = conv_forward(x, &cb.weight, stride);
    bn_eval(&z, &cb.gamma, &cb.beta, &cb.running_mean, &cb.running_var, relu)
}

/// Backward through conv + batch norm. Returns the input gradient (if wanted)
/// and `(dweight, dgamma, dbeta)`.
fn cb_backward<T: Scalar>(
    x: &Activation<T>,
    cb: &ConvBn<T>,
    stride: usize,
    cache: &BnCache<T>,
    dy: &Activation<T>,
    need_dx: bool,
) -> (Option<Activation<T>>, [Tensor<T>; 3]) {
    let (dz, dgamma, dbeta) = bn_backward(dy, cache, &cb.gamma);
    let (dx, dw) = conv_backward(x, &cb.weight, stride, &dz, need_dx);
    (dx, [dw, dgamma, dbeta])
}

fn block_eval<T: Scalar>(x: &Activation<T>, b: &Bottleneck<T>) -> Activation<T> {
    let r1 = cb_eval(x, &b.conv1, 1, true);
    let r2 = cb_eval(&r1, &b.conv2, b.stride, true);
    let mut out = cb_eval(&r2, &b.conv3, 1, false);
    match &b.downsample {
        Some(d) => add_relu_inplace(&mut out, &cb_eval(x, d, b.stride, false)),
        None => add_relu_inplace(&mut out, x),
    }
    out
}

fn block_train<T: Scalar>(x: &Activation<T>, b: &Bottleneck<T>, stats: &mut Vec<BnBatchStats>) -> BlockTape<T> {
    let (bn1, r1) = cb_train(x, &b.conv1, 1, true, stats);
    let (bn2, r2) = cb_train(&r1, &b.conv2, b.stride, true, stats);
    let (bn3, mut out) = cb_train(&r2, &b.conv3, 1, false, stats);
    let down = match &b.downsample {
        Some(d) => {
            let (cache, short) = cb_train(x, d, b.stride, false, stats);
            add_relu_inplace(&mut out, &short);
            Some(cache)
        }
        None => {
            add_relu_inplace(&mut out, x);
            None
        }
    };
    BlockTape {
        bn1,
        r1,
        bn2,
        r2,
        bn3,
        down,
        out,
    }
}

impl<T: Scalar> ModelParams<T> {
    fn stem_eval(&self, x: &Activation<T>) -> Activation<T> {
        let s = &self.spec.stem;
        let r = cb_eval(x, &self.stem, s.stride, true);
        maxpool_forward(&r, s.pool_kernel, s.pool_stride).0
    }

    /// Activation entering the first residual stage (after stem conv and pool).
    pub fn stem_output(&self, x: &Activation<T>) -> Result<Activation<T>> {
        check_input(self, x)?;
        Ok(self.stem_eval(x))
    }

    /// Inference-mode activations after the stem and after every stage.
    pub fn stage_outputs(&self, x: &Activation<T>) -> Result<Vec<Activation<T>>> {
        check_input(self, x)?;
        let mut outs = vec![self.stem_eval(x)];
        for blocks in &self.stages {
            let mut a = outs.last().expect("stem output").clone();
            for b in blocks {
                a = block_eval(&a, b);
            }
            outs.push(a);
        }
        Ok(outs)
    }

    /// Final-stage activations (before global pooling), inference mode.
    pub fn features(&self, x: &Activation<T>) -> Result<Activation<T>> {
        check_input(self, x)?;
        let mut a = self.stem_eval(x);
        for b in self.blocks() {
            a = block_eval(&a, b);
        }
        Ok(a)
    }

    /// Inference-mode logits `[n, classes]`, using batch-norm running statistics.
    pub fn forward_eval(&self, x: &Activation<T>) -> Result<Tensor<T>> {
        let f = self.features(x)?;
        Ok(self.head(&global_avg_pool(&f)))
    }

    /// Applies the affine head to pooled features `[n, channels]`.
    pub fn head(&self, pooled: &Tensor<T>) -> Tensor<T> {
        linear_forward(pooled, &self.head_weight, &self.head_bias)
    }

    /// Training-mode forward with batch statistics. Parameters are not
    /// modified; running statistics are folded in by [`ModelParams::apply_bn_stats`].
    pub fn forward_train(&self, x: &Activation<T>) -> Result<TrainForward<T>> {
        check_input(self, x)?;
        let s = &self.spec.stem;
        let mut stats = Vec::new();
        let (stem_bn, stem_relu) = cb_train(x, &self.stem, s.stride, true, &mut stats);
        let (pool_out, pool_idx) = maxpool_forward(&stem_relu, s.pool_kernel, s.pool_stride);
        let mut blocks: Vec<BlockTape<T>> = Vec::with_capacity(self.spec.total_blocks());
        for b in self.blocks() {
            let input = blocks.last().map(|t| &t.out).unwrap_or(&pool_out);
            let t = block_train(input, b, &mut stats);
            blocks.push(t);
        }
        let last = blocks.last().map(|t| &t.out).unwrap_or(&pool_out);
        let feat = global_avg_pool(last);
        let logits = self.head(&feat);
        Ok(TrainForward {
            logits,
            tape: Tape {
                input_shape: x.shape(),
                stem_bn,
                stem_relu,
                pool_idx,
                pool_out,
                blocks,
                feat,
                bn_stats: stats,
            },
        })
    }

    /// Gradients of the loss with respect to every trainable tensor, given
    /// `dlogits = dL/dlogits` from the same batch.
    pub fn backward(&self, x: &Activation<T>, tape: &Tape<T>, dlogits: &Tensor<T>) -> Gradients<T> {
        assert_eq!(x.shape(), tape.input_shape, "backward input differs from forward input");
        let (dfeat, dhw, dhb) = linear_backward(&tape.feat, &self.head_weight, dlogits);
        let last_shape = tape.blocks.last().map(|t| t.out.shape()).unwrap_or(tape.pool_out.shape());
        let mut d = global_avg_pool_backward(&dfeat, last_shape);

        let flat: Vec<&Bottleneck<T>> = self.blocks().collect();
        let mut block_grads: Vec<Vec<Tensor<T>>> = Vec::with_capacity(flat.len());
        for i in (0..flat.len()).rev() {
            let b = flat[i];
            let t = &tape.blocks[i];
            let input = if i == 0 { &tape.pool_out } else { &tape.blocks[i - 1].out };
            relu_backward_inplace(&mut d, &t.out);
            let (dr2, g3) = cb_backward(&t.r2, &b.conv3, 1, &t.bn3, &d, true);
            let mut dr2 = dr2.expect("requested");
            relu_backward_inplace(&mut dr2, &t.r2);
            let (dr1, g2) = cb_backward(&t.r1, &b.conv2, b.stride, &t.bn2, &dr2, true);
            let mut dr1 = dr1.expect("requested");
            relu_backward_inplace(&mut dr1, &t.r1);
            let (dx, g1) = cb_backward(input, &b.conv1, 1, &t.bn1, &dr1, true);
            let mut dx = dx.expect("requested");
            let mut grads: Vec<Tensor<T>> = g1.into_iter().chain(g2).chain(g3).collect();
            match (&b.downsample, &t.down) {
                (Some(ds), Some(cache)) => {
                    let (dsx, gd) = cb_backward(input, ds, b.stride, cache, &d, true);
                    add_inplace(&mut dx, &dsx.expect("requested"));
                    grads.extend(gd);
                }
                _ => add_inplace(&mut dx, &d),
            }
            block_grads.push(grads);
            d = dx;
        }
        block_grads.reverse();

        let s = &self.spec.stem;
        let mut dr = maxpool_backward(&d, &tape.pool_idx, tape.stem_relu.shape());
        relu_backward_inplace(&mut dr, &tape.stem_relu);
        let (_, gs) = cb_backward(x, &self.stem, s.stride, &tape.stem_bn, &dr, false);

        let mut all: Vec<Tensor<T>> = gs.into_iter().collect();
        for g in block_grads {
            all.extend(g);
        }
        all.push(dhw);
        all.push(dhb);
        Gradients(all)
    }

    /// Folds training-batch statistics into the running estimates with
    /// momentum 0.1.
    pub fn apply_bn_stats(&mut self, stats: &[BnBatchStats]) {
        let m = BN_MOMENTUM;
        let mut layers: Vec<&mut ConvBn<T>> = vec![&mut self.stem];
        for blk in self.stages.iter_mut().flatten() {
            layers.push(&mut blk.conv1);
            layers.push(&mut blk.conv2);
            layers.push(&mut blk.conv3);
            if let Some(d) = &mut blk.downsample {
                layers.push(d);
            }
        }
        assert_eq!(layers.len(), stats.len(), "batch-norm statistics count");
        for (cb, st) in layers.into_iter().zip(stats) {
            for (r, &v) in cb.running_mean.data.iter_mut().zip(&st.mean) {
                *r = T::from_f64_lossy((1.0 - m) * r.to_f64().unwrap_or(f64::NAN) + m * v);
            }
            for (r, &v) in cb.running_var.data.iter_mut().zip(&st.var) {
                *r = T::from_f64_lossy((1.0 - m) * r.to_f64().unwrap_or(f64::NAN) + m * v);
            }
        }
    }
}

/// Final-stage activations for one `[c, h, w]` input and the head weights
/// `[classes, channels]`, the two ingredients of a class activation map.
pub fn feature_maps<T: Scalar>(params: &ModelParams<T>, input: &Activation<T>) -> Result<(Activation<T>, Tensor<T>)> {
    if input.n != 1 {
        return Err(Error::Shape(format!("feature_maps takes one sample, got {}", input.n)));
    }
    Ok((params.features(input)?, params.head_weight.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::build_model;
    use crate::model::spec::ModelSpec;

    fn input(n: usize, size: usize) -> Activation<f64> {
        Activation::from_vec(
            n,
            10,
            size,
            size,
            (0..n * 10 * size * size).map(|i| ((i as f64) * 0.37).sin()).collect(),
        )
    }

    #[test]
    fn tiny_shapes() {
        let p = build_model::<f64>(&ModelSpec::tiny(3), 0).unwrap();
        let x = input(2, 40);
        let outs = p.stage_outputs(&x).unwrap();
        let sizes: Vec<usize> = outs.iter().map(|a| a.h).collect();
        assert_eq!(sizes, vec![40, 40, 20, 10, 5]);
        assert_eq!(p.forward_eval(&x).unwrap().shape, vec![2, 3]);
        let fwd = p.forward_train(&x).unwrap();
        assert_eq!(fwd.logits.shape, vec![2, 3]);
        assert_eq!(fwd.tape.bn_stats.len(), 1 + 4 * 3 + 3);
    }

    #[test]
    fn eval_rows_are_per_sample() {
        let p = build_model::<f64>(&ModelSpec::tiny(3), 0).unwrap();
        let one = input(1, 32);
        let mut two = one.clone();
        two.n = 2;
        two.data.extend_from_slice(&one.data);
        let l = p.forward_eval(&two).unwrap();
        assert_eq!(l.data[..3], l.data[3..]);
    }

    #[test]
    fn residual_identity_at_init() {
        // zero bn3 scale silences the residual branch, so identity-shortcut
        // blocks pass their (non-negative) input through unchanged
        let p = build_model::<f64>(&ModelSpec::tiny(3), 4).unwrap();
        let x = input(1, 32);
        let stem = p.stem_output(&x).unwrap();
        let out = block_eval(&stem, &p.stages[0][0]);
        assert!(p.stages[0][0].downsample.is_none());
        assert_eq!(out, stem);
    }

    #[test]
    fn channel_mismatch_is_error() {
        let p = build_model::<f64>(&ModelSpec::tiny(3), 0).unwrap();
        let x = Activation::<f64>::zeros(1, 3, 32, 32);
        assert!(matches!(p.forward_eval(&x), Err(Error::Shape(_))));
    }
}
