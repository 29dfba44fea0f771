//! Writes a small synthetic raster archive and site catalog, then crops site
//! and background patches from it.
//!
//!     cargo run --release --example ingest_fixture -- /tmp/plantscope-ingest

use std::path::PathBuf;

use chrono::NaiveDate;
use plantscope::ingest::catalog::write_catalog;
use plantscope::ingest::fixtures::{fixture_sites, write_fixture_archive};
use plantscope::ingest::LocalProvider;
use plantscope::pipeline::{run_ingest, IngestOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "plantscope-ingest".into()).into();
    std::fs::create_dir_all(&root)?;
    let sites = fixture_sites(6, 600);
    write_catalog(root.join("catalog.csv"), &sites)?;

    // monthly scenes, one of them too cloudy to use
    let dates: Vec<(NaiveDate, f64)> = (1..=8)
        .map(|m| (NaiveDate::from_ymd_opt(2020, m, 15).unwrap(), if m == 4 { 0.4 } else { 0.02 }))
        .collect();
    let ids = write_fixture_archive(&root.join("rasters"), &sites, 600, &dates, 1)?;
    println!("wrote {} rasters under {}", ids.len(), root.join("rasters").display());

    let provider = LocalProvider::open(root.join("rasters"))?;
    let opts = IngestOptions {
        n_rasters: 5,
        ..Default::default()
    };
    let summary = run_ingest(&root.join("catalog.csv"), &provider, &root.join("store"), &opts)?;
    println!(
        "{} sites, {} rasters: {} site patches, {} background patches",
        summary.sites, summary.rasters, summary.site_patches, summary.background_patches
    );
    for s in &summary.shortfall {
        println!("shortfall: {s}");
    }
    Ok(())
}
