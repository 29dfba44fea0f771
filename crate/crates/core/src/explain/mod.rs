//! Class activation maps and RGB overlays.

pub mod render;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ops::global_avg_pool;
use crate::model::{feature_maps, Activation, ModelParams, Scalar};
use crate::training::argmax_rows;

pub use render::{cam_image, colormap, overlay, rgb_composite, write_cam_outputs, CamOutputs, CamSidecar, DEFAULT_STRETCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamResult {
    /// Min-max normalized, upsampled to the input size.
    pub heatmap: Array2<f64>,
    pub class_index: usize,
    pub logit: f64,
    /// Weighted sum of the final feature maps, before upsampling.
    pub raw_map: Array2<f64>,
    /// The raw map was constant, so the heatmap is all zeros.
    pub constant: bool,
}

/// Class activation map of `class_index` for one normalized `[c, h, w]` input.
pub fn compute_cam<T: Scalar>(params: &ModelParams<T>, input: &Array3<f32>, class_index: usize) -> Result<CamResult> {
    let classes = params.spec.num_classes;
    if class_index >= classes {
        return Err(Error::ClassOutOfRange { index: class_index, classes });
    }
    let x = to_activation(input);
    let (features, weight) = feature_maps(params, &x)?;
    let logits = params.head(&global_avg_pool(&features));
    let logit = logits.data[class_index].to_f64().unwrap_or(f64::NAN);
    let (c, h, w) = (features.c, features.h, features.w);
    let plane = h * w;
    let mut raw = vec![0.0f64; plane];
    for ch in 0..c {
        let wk = weight.data[class_index * c + ch].to_f64().unwrap_or(f64::NAN);
        if wk == 0.0 {
            continue;
        }
        for (r, a) in raw.iter_mut().zip(&features.data[ch * plane..(ch + 1) * plane]) {
            *r += wk * a.to_f64().unwrap_or(f64::NAN);
        }
    }
    let raw_map = Array2::from_shape_vec((h, w), raw).map_err(|e| Error::Shape(e.to_string()))?;
    let up = upsample_bilinear(&raw_map, input.len_of(Axis(1)), input.len_of(Axis(2)));
    let (heatmap, constant) = min_max_normalize(&up);
    Ok(CamResult {
        heatmap,
        class_index,
        logit,
        raw_map,
        constant,
    })
}

/// Argmax class of one normalized input.
pub fn predicted_class<T: Scalar>(params: &ModelParams<T>, input: &Array3<f32>) -> Result<usize> {
    let logits = params.forward_eval(&to_activation(input))?;
    Ok(argmax_rows(&logits)[0])
}

fn to_activation<T: Scalar>(input: &Array3<f32>) -> Activation<T> {
    let (c, h, w) = input.dim();
    Activation::from_vec(1, c, h, w, input.iter().map(|&v| T::from_f64_lossy(v as f64)).collect())
}

/// Bilinear resampling with pixel-center alignment and clamped edges.
pub fn upsample_bilinear(map: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = map.dim();
    let coord = |i: usize, n_in: usize, n_out: usize| {
        let s = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    Array2::from_shape_fn((out_h, out_w), |(r, c)| {
        let (r0, r1, fr) = coord(r, h, out_h);
        let (c0, c1, fc) = coord(c, w, out_w);
        let top = map[[r0, c0]] * (1.0 - fc) + map[[r0, c1]] * fc;
        let bottom = map[[r1, c0]] * (1.0 - fc) + map[[r1, c1]] * fc;
        top * (1.0 - fr) + bottom * fr
    })
}

/// Scales to [0, 1]; a constant map becomes zeros and is flagged.
pub fn min_max_normalize(map: &Array2<f64>) -> (Array2<f64>, bool) {
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 1e-12 * lo.abs().max(hi.abs())) || !range.is_finite() {
        return (Array2::zeros(map.dim()), true);
    }
    (map.mapv(|v| ((v - lo) / range).clamp(0.0, 1.0)), false)
}
