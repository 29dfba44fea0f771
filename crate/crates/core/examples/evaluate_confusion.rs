//! Repeated balanced test draws of 20 per class with a stand-in predictor that confuses
//! two cooling types, rendered as CSV and SVG.

use plantscope::dataset::{BuildOptions, DatasetManifest, Split, SyntheticSceneSpec};
use plantscope::evaluation::{evaluate_with, render_confusion};
use plantscope::Task;

fn main() -> plantscope::Result<()> {
    let m = DatasetManifest::synthetic(Task::Cooling, 80, SyntheticSceneSpec::cooling(), &BuildOptions::default())?;
    let report = evaluate_with(&m, Split::Test, 10, Some(20), 3, |idx| {
        Ok(idx
            .iter()
            .zip(m.labels(idx))
            .map(|(&i, l)| if l == 1 && i % 4 == 0 { 2 } else { l })
            .collect())
    })?;
    for (name, (row, sd)) in m.label_map.names().iter().zip(report.mean_confusion.iter().zip(&report.std_confusion)) {
        let cells: Vec<String> = row.iter().zip(sd).map(|(m, s)| format!("{m:5.1}±{s:3.1}")).collect();
        println!("{name:<16} {}", cells.join("  "));
    }
    println!("overall {:.2}%", report.overall_accuracy);
    let (csv, svg) = render_confusion(&report, "plantscope-eval", "confusion")?;
    println!("{}\n{}", csv.display(), svg.display());
    Ok(())
}
