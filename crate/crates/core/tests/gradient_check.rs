mod common;

use common::gradcheck::{batch, max_relative_error, tiny_params};

#[test]
fn tiny_spec_gradients_match_finite_differences() {
    for seed in 0..3 {
        let err = max_relative_error(seed);
        assert!(err <= 1e-3, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn eval_and_train_mode_agree_after_bn_calibration() {
    // with running statistics equal to the batch statistics, eval-mode
    // logits match train-mode logits for the same batch
    let mut p = tiny_params(5);
    let (x, _) = batch(6, 6, 16);
    let stats = p.forward_train(&x).unwrap().tape.bn_stats.clone();
    for _ in 0..200 {
        p.apply_bn_stats(&stats);
    }
    let train = p.forward_train(&x).unwrap().logits;
    let eval = p.forward_eval(&x).unwrap();
    // unbiased running variance vs biased batch variance differs by m/(m-1)
    for (a, b) in train.data.iter().zip(&eval.data) {
        assert!((a - b).abs() < 0.2, "{a} vs {b}");
    }
}
