//! Builds a manifest over generated patches and shows the split sizes and
//! normalization statistics.

use plantscope::dataset::{BuildOptions, DatasetManifest, Granularity, Split, StatsScope, SyntheticSceneSpec};
use plantscope::Task;

fn main() -> plantscope::Result<()> {
    let opts = BuildOptions {
        seed: 7,
        granularity: Granularity::PerImage,
        stats_scope: StatsScope::TrainOnly,
        ..Default::default()
    };
    let m = DatasetManifest::synthetic(Task::Plant, 40, SyntheticSceneSpec::plant(), &opts)?;

    println!("{:<14} {:>6} {:>6} {:>6}", "class", "train", "val", "test");
    let sizes: Vec<Vec<usize>> = Split::ALL
        .iter()
        .map(|&s| m.members(s).iter().map(Vec::len).collect())
        .collect();
    for (c, name) in m.label_map.names().iter().enumerate() {
        println!("{name:<14} {:>6} {:>6} {:>6}", sizes[0][c], sizes[1][c], sizes[2][c]);
    }

    println!("\nband means / stds ({:?})", m.stats_scope);
    for (b, (mu, sd)) in m.norm_stats.mean.iter().zip(&m.norm_stats.std).enumerate() {
        println!("  band {b}: {mu:.4} / {sd:.4}");
    }

    let epoch = m.balanced_epoch(Split::Train, Some(30), 1)?;
    println!("\nbalanced epoch of {} draws, first labels {:?}", epoch.len(), &m.labels(&epoch)[..12]);
    Ok(())
}
