use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::EvaluationReport;
use crate::error::{Error, Result};

/// Standard deviations below this many percentage points are not annotated.
pub const STD_ANNOTATION_THRESHOLD: f64 = 0.5;

/// CSV with a header of class names and one row per true class whose cells
/// are `mean|std`. Values use the shortest exact decimal form.
pub fn confusion_csv(report: &EvaluationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let names = report.label_map.names();
    let header: Vec<&str> = std::iter::once("class").chain(names.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(|e| Error::Invalid(e.to_string()))?;
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(
            report.mean_confusion[i]
                .iter()
                .zip(&report.std_confusion[i])
                .map(|(m, s)| format!("{m}|{s}")),
        );
        w.write_record(&row).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

pub fn write_confusion_csv(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, confusion_csv(report)?).map_err(|e| Error::io(path, e))
}

/// Class names, mean matrix and std matrix from [`confusion_csv`] output.
#[allow(clippy::type_complexity)]
pub fn parse_confusion_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let names: Vec<String> = r
        .headers()
        .map_err(|e| Error::Invalid(e.to_string()))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let (mut mean, mut std) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Invalid(e.to_string()))?;
        let (mut mr, mut sr) = (Vec::new(), Vec::new());
        for cell in rec.iter().skip(1) {
            let (m, s) = cell
                .split_once('|')
                .ok_or_else(|| Error::Invalid(format!("cell {cell:?} is not mean|std")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| Error::Invalid(format!("{v:?}: {e}")));
            mr.push(num(m)?);
            sr.push(num(s)?);
        }
        mean.push(mr);
        std.push(sr);
    }
    Ok((names, mean, std))
}

/// Text shown in a heat-map cell.
pub fn cell_annotation(mean: f64, std: f64) -> String {
    if std >= STD_ANNOTATION_THRESHOLD {
        format!("{mean:.1}±{std:.1}")
    } else {
        format!("{mean:.1}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heat map as SVG: white to dark blue by mean percentage, cell labels from
/// [`cell_annotation`] for non-empty cells, class names on both axes.
pub fn confusion_svg(report: &EvaluationReport) -> String {
    let names = report.label_map.names();
    let c = names.len();
    let cell = 64.0;
    let margin = 150.0;
    let size = margin + cell * c as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, row) in report.mean_confusion.iter().enumerate() {
        for (j, &m) in row.iter().enumerate() {
            let t = (m / 100.0).clamp(0.0, 1.0);
            let (r, g, b) = (
                (255.0 - t * 247.0).round() as u8,
                (255.0 - t * 207.0).round() as u8,
                (255.0 - t * 148.0).round() as u8,
            );
            let (x, y) = (margin + j as f64 * cell, margin + i as f64 * cell);
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#{r:02x}{g:02x}{b:02x}" stroke="#cccccc"/>"##
            );
            if m > 0.0 {
                let fill = if t > 0.5 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle" fill="{fill}">{}</text>"#,
                    x + cell / 2.0,
                    y + cell / 2.0,
                    escape(&cell_annotation(m, report.std_confusion[i][j]))
                );
            }
        }
    }
    for (k, name) in names.iter().enumerate() {
        let mid = margin + (k as f64 + 0.5) * cell;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{mid}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            margin - 6.0,
            escape(name)
        );
        let _ = writeln!(
            s,
            r#"<text x="{mid}" y="{}" text-anchor="start" transform="rotate(-45 {mid} {})">{}</text>"#,
            margin - 6.0,
            margin - 6.0,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="14" text-anchor="middle" font-size="13">predicted class (columns), true class (rows), percent; overall {:.1}%</text>"#,
        size / 2.0,
        report.overall_accuracy
    );
    s.push_str("</svg>\n");
    s
}

pub fn write_confusion_svg(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, confusion_svg(report)).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.csv` and `<stem>.svg`; returns both paths.
pub fn render_confusion(report: &EvaluationReport, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    let svg = dir.join(format!("{stem}.svg"));
    write_confusion_csv(report, &csv)?;
    write_confusion_svg(report, &svg)?;
    Ok((csv, svg))
}
