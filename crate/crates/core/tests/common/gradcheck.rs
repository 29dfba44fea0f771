use plantscope::model::{build_model, Activation, ModelParams, ModelSpec};
use plantscope::training::cross_entropy_with_grad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tiny network in f64 with every batch-norm scale and shift randomized, so
/// residual branches carry gradient.
pub fn tiny_params(seed: u64) -> ModelParams<f64> {
    randomized(&ModelSpec::tiny(3), seed)
}

pub fn randomized(spec: &ModelSpec, seed: u64) -> ModelParams<f64> {
    let mut p = build_model::<f64>(spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let names = p.trainable_names();
    for (name, t) in names.iter().zip(p.trainable_mut()) {
        if name.contains("bn") || name.contains("downsample.1") {
            for v in &mut t.data {
                *v = if name.ends_with(".weight") {
                    rng.random_range(0.5..1.5)
                } else {
                    rng.random_range(-0.2..0.2)
                };
            }
        }
    }
    p
}

pub fn batch(seed: u64, n: usize, size: usize) -> (Activation<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 10 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|i| i % 3).collect();
    (Activation::from_vec(n, 10, size, size, data), labels)
}

pub fn loss(p: &ModelParams<f64>, x: &Activation<f64>, y: &[usize]) -> f64 {
    let fwd = p.forward_train(x).unwrap();
    cross_entropy_with_grad(&fwd.logits, y).unwrap().0
}

/// Analytic vs central-difference gradients for 20 randomly chosen scalars.
/// Returns the largest relative error.
pub fn max_relative_error(seed: u64) -> f64 {
    let p = tiny_params(seed);
    let (x, y) = batch(seed + 1, 4, 8);
    let fwd = p.forward_train(&x).unwrap();
    let (_, dlogits) = cross_entropy_with_grad(&fwd.logits, &y).unwrap();
    let grads = p.backward(&x, &fwd.tape, &dlogits);

    let sizes: Vec<usize> = p.trainable().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut k = rng.random_range(0..total);
        let mut t = 0;
        while k >= sizes[t] {
            k -= sizes[t];
            t += 1;
        }
        let mut plus = p.clone();
        plus.trainable_mut()[t].data[k] += h;
        let mut minus = p.clone();
        minus.trainable_mut()[t].data[k] -= h;
        let numeric = (loss(&plus, &x, &y) - loss(&minus, &x, &y)) / (2.0 * h);
        let analytic = grads.0[t].data[k];
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
