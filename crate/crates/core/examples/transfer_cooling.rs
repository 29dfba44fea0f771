//! Cooling-type training from a plant model versus from scratch.
//!
//!     cargo run --release --example transfer_cooling

use plantscope::dataset::{BuildOptions, DatasetManifest, Split, SyntheticSceneSpec};
use plantscope::evaluation::evaluate;
use plantscope::training::{train, train_cooling, Architecture, TrainConfig};
use plantscope::Task;

fn main() -> plantscope::Result<()> {
    let plant = DatasetManifest::synthetic(Task::Plant, 150, SyntheticSceneSpec::plant(), &BuildOptions::default())?;
    let base = TrainConfig {
        architecture: Architecture::Tiny,
        learning_rate: 0.05,
        epochs: 8,
        per_class: Some(50),
        val_per_class: Some(10),
        early_stop_patience: None,
        ..Default::default()
    };
    let pretrained = train(&plant, &base, None)?.best;
    println!("plant model: best val {}", pretrained.metadata["best_val_accuracy"]);

    let cooling = DatasetManifest::synthetic(Task::Cooling, 120, SyntheticSceneSpec::cooling(), &BuildOptions::default())?;
    let cfg = TrainConfig {
        task: Task::Cooling,
        epochs: 10,
        ..base
    };
    let transfer = train_cooling(&cooling, &pretrained, &cfg, None)?;
    let scratch = train(&cooling, &cfg, None)?;
    for (name, out) in [("transfer", &transfer), ("scratch", &scratch)] {
        let curve: Vec<String> = out.state.history.iter().map(|r| format!("{:.2}", r.val_accuracy)).collect();
        let test = evaluate(&out.best, &cooling, Split::Test, 10, None, 0)?;
        println!(
            "{name:<9} epochs to 90%: {:?}  test {:.1}%  val [{}]",
            out.epochs_to(0.9),
            test.overall_accuracy,
            curve.join(" ")
        );
    }
    Ok(())
}
