#![allow(dead_code)]

pub mod geo_oracle;
pub mod gradcheck;

use std::path::PathBuf;

use plantscope::dataset::synthetic::band_means;
use plantscope::dataset::{
    generate_synthetic, split_dataset, DatasetManifest, Granularity, NormStats, PatchEntry, StatsScope, SyntheticSceneSpec,
    DEFAULT_FRACTIONS,
};
use plantscope::Task;

/// Holdout seeds start here, far from the fit seeds.
pub const HOLDOUT_SEED: u64 = 1_000_000;

fn features(class: usize, seeds: std::ops::Range<u64>, spec: &SyntheticSceneSpec) -> Vec<(Vec<f64>, usize)> {
    seeds
        .map(|s| (band_means(&generate_synthetic(class, s, spec).unwrap().pixels), class))
        .collect()
}

/// Multinomial logistic regression on standardized per-band means, fit by
/// full-batch gradient descent. Returns holdout accuracy.
pub fn linear_probe(spec: &SyntheticSceneSpec, classes: usize, fit_per_class: u64, holdout_per_class: u64) -> f64 {
    let fit: Vec<_> = (0..classes).flat_map(|c| features(c, 0..fit_per_class, spec)).collect();
    let holdout: Vec<_> = (0..classes)
        .flat_map(|c| features(c, HOLDOUT_SEED..HOLDOUT_SEED + holdout_per_class, spec))
        .collect();
    let d = fit[0].0.len();
    let n = fit.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| fit.iter().map(|(x, _)| x[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| (fit.iter().map(|(x, _)| (x[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let z = |x: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = (0..d).map(|j| (x[j] - mean[j]) / std[j]).collect();
        v.push(1.0);
        v
    };
    let fit_z: Vec<(Vec<f64>, usize)> = fit.iter().map(|(x, y)| (z(x), *y)).collect();
    let mut w = vec![vec![0.0; d + 1]; classes];
    let scores = |w: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
        w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };
    for _ in 0..3000 {
        let mut grad = vec![vec![0.0; d + 1]; classes];
        for (x, y) in &fit_z {
            let s = scores(&w, x);
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
            let total: f64 = e.iter().sum();
            for k in 0..classes {
                let p = e[k] / total - if k == *y { 1.0 } else { 0.0 };
                for j in 0..=d {
                    grad[k][j] += p * x[j] / n;
                }
            }
        }
        for k in 0..classes {
            for j in 0..=d {
                w[k][j] -= 1.0 * grad[k][j];
            }
        }
    }
    let correct = holdout
        .iter()
        .filter(|(x, y)| {
            let s = scores(&w, &z(x));
            let best = (0..classes).fold(0, |b, k| if s[k] > s[b] { k } else { b });
            best == *y
        })
        .count();
    correct as f64 / holdout.len() as f64
}

/// A manifest of label-only entries, for exercising the evaluation protocol
/// with a stand-in predictor.
pub fn label_only_manifest(task: Task, per_class: usize) -> DatasetManifest {
    let entries: Vec<PatchEntry> = (0..task.num_classes())
        .flat_map(|c| {
            (0..per_class).map(move |k| PatchEntry {
                path: format!("p{c}_{k}"),
                site_id: format!("s{c}_{k}"),
                label: c,
            })
        })
        .collect();
    DatasetManifest {
        task,
        label_map: task.label_map(),
        patches: split_dataset(&entries, DEFAULT_FRACTIONS, 3, Granularity::PerImage).unwrap(),
        norm_stats: NormStats::identity(10),
        stats_scope: StatsScope::AllImages,
        split_fractions: DEFAULT_FRACTIONS,
        granularity: Granularity::PerImage,
        rng_seed: 3,
        synthetic: None,
        base_dir: PathBuf::new(),
    }
}
