use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One momentum step with weight decay folded into the gradient:
/// `v <- momentum * v + g + weight_decay * w`, then `w <- w - lr * v`.
pub fn sgd_step<T: Scalar>(
    weights: &mut [&mut Tensor<T>],
    velocity: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    cfg: &SgdConfig,
) -> Result<()> {
    if weights.len() != velocity.len() || weights.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} weights, {} velocities, {} gradients",
            weights.len(),
            velocity.len(),
            grads.len()
        )));
    }
    for ((w, v), g) in weights.iter().zip(velocity.iter()).zip(grads) {
        if w.shape != v.shape || w.shape != g.shape {
            return Err(Error::Shape(format!(
                "weight {:?}, velocity {:?}, gradient {:?}",
                w.shape, v.shape, g.shape
            )));
        }
    }
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let mu = T::from_f64_lossy(cfg.momentum);
    let wd = T::from_f64_lossy(cfg.weight_decay);
    for ((w, v), g) in weights.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        for ((wi, vi), &gi) in w.data.iter_mut().zip(v.data.iter_mut()).zip(&g.data) {
            *vi = mu * *vi + gi + wd * *wi;
            *wi = *wi - lr * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_scalar() {
        let mut w = Tensor::from_vec(&[1], vec![1.0f64]);
        let mut v = vec![Tensor::zeros(&[1])];
        let g = vec![Tensor::from_vec(&[1], vec![1.0])];
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
        };
        for _ in 0..2 {
            sgd_step(&mut [&mut w], &mut v, &g, &cfg).unwrap();
        }
        assert!((w.data[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut w = Tensor::<f32>::zeros(&[2]);
        let mut v = vec![Tensor::zeros(&[2])];
        let g = vec![Tensor::zeros(&[3])];
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        assert!(sgd_step(&mut [&mut w], &mut v, &g, &cfg).is_err());
    }
}
