//! One generated patch per class: motif coverage and per-band means.

use plantscope::dataset::synthetic::{band_means, generate_synthetic_with_mask};
use plantscope::dataset::SyntheticSceneSpec;
use plantscope::Task;

fn main() -> plantscope::Result<()> {
    for task in [Task::Plant, Task::Cooling] {
        let spec = SyntheticSceneSpec::for_task(task);
        println!("{task:?}");
        for (c, name) in task.label_map().names().iter().enumerate() {
            let (patch, mask) = generate_synthetic_with_mask(c, 0, &spec)?;
            let cover = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
            let means: Vec<String> = band_means(&patch.pixels).iter().map(|v| format!("{v:.3}")).collect();
            println!("  {name:<16} motif {:5.1}%  {}", 100.0 * cover, means.join(" "));
        }
    }
    Ok(())
}
