//! Trains the tiny network on generated plant patches and reports test
//! accuracy.
//!
//!     cargo run --release --example train_synthetic -- 8

use plantscope::dataset::{BuildOptions, DatasetManifest, Split, SyntheticSceneSpec};
use plantscope::evaluation::evaluate;
use plantscope::training::{train, Architecture, TrainConfig};
use plantscope::Task;

fn main() -> plantscope::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let m = DatasetManifest::synthetic(Task::Plant, 200, SyntheticSceneSpec::plant(), &BuildOptions::default())?;
    let cfg = TrainConfig {
        architecture: Architecture::Tiny,
        learning_rate: 0.05,
        epochs,
        per_class: Some(60),
        val_per_class: Some(15),
        ..Default::default()
    };
    let out = train(&m, &cfg, Some("plantscope-train".as_ref()))?;
    for r in &out.state.history {
        println!("epoch {:>3}  loss {:.4}  val {:.3}  lr {:e}", r.epoch, r.train_loss, r.val_accuracy, r.lr);
    }
    let report = evaluate(&out.best, &m, Split::Test, 10, None, 0)?;
    println!("test balanced accuracy {:.1}%", report.overall_accuracy);
    if let Some(p) = out.checkpoint {
        println!("checkpoint: {}", p.display());
    }
    Ok(())
}
