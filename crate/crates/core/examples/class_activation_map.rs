//! Class activation maps of a briefly trained cooling model on a few test
//! patches, written as PNG triples.

use plantscope::dataset::{normalize, BuildOptions, DatasetManifest, Split, SyntheticSceneSpec};
use plantscope::explain::{compute_cam, predicted_class, rgb_composite, write_cam_outputs, CamSidecar, DEFAULT_STRETCH};
use plantscope::training::{train, Architecture, TrainConfig};
use plantscope::Task;

fn main() -> plantscope::Result<()> {
    let m = DatasetManifest::synthetic(Task::Cooling, 60, SyntheticSceneSpec::cooling(), &BuildOptions::default())?;
    let cfg = TrainConfig {
        task: Task::Cooling,
        architecture: Architecture::Tiny,
        learning_rate: 0.05,
        epochs: 6,
        per_class: Some(40),
        batch_size: 16,
        ..Default::default()
    };
    let model = train(&m, &cfg, None)?.best;
    let test: Vec<usize> = m.members(Split::Test).into_iter().map(|c| c[0]).collect();
    for i in test {
        let raw = m.load_pixels(i)?;
        let x = normalize(&raw, &m.norm_stats)?;
        let predicted = predicted_class(&model, &x)?;
        let cam = compute_cam(&model, &x, predicted)?;
        let sidecar = CamSidecar {
            patch: m.patches[i].path.clone(),
            class_index: predicted,
            class_name: m.label_map.name(predicted).unwrap_or_default().to_string(),
            predicted_class: predicted,
            logit: cam.logit,
            constant: cam.constant,
            alpha: 0.5,
        };
        let stem = format!("patch{i}");
        let out = write_cam_outputs("plantscope-cam", &stem, &rgb_composite(&raw, DEFAULT_STRETCH)?, &cam, &sidecar)?;
        println!(
            "{} true {} predicted {}  -> {}",
            stem,
            m.label_map.name(m.patches[i].label).unwrap_or("?"),
            sidecar.class_name,
            out.overlay.display()
        );
    }
    Ok(())
}
