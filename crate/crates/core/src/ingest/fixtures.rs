//! Offline raster fixtures: small UTM scenes with planted sites, written in the
//! same directory layout the local provider reads.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array2, Axis};

use super::catalog::SiteRecord;
use super::raster::{native_resolution, BandGrid, RasterSource, ATMOSPHERIC_BANDS, PATCH_BANDS};
use crate::classes::{CoolingClass, PlantClass};
use crate::dataset::synthetic::{paint, render, Canvas, Recipe, SyntheticSceneSpec};
use crate::error::Result;
use crate::geo::{Crs, GeoTransform};
use crate::seed;

/// Upper-left corner of fixture scenes, UTM zone 33N (eastern Germany).
pub const FIXTURE_ORIGIN: (f64, f64) = (400_000.0, 5_750_000.0);
pub const FIXTURE_CRS: Crs = Crs::Utm { zone: 33, north: true };

fn all_band_names() -> impl Iterator<Item = &'static str> {
    PATCH_BANDS.into_iter().chain(ATMOSPHERIC_BANDS)
}

fn fixture_geotransform() -> GeoTransform {
    GeoTransform::north_up(FIXTURE_ORIGIN.0, FIXTURE_ORIGIN.1, 10.0)
}

/// Averages `factor x factor` blocks; partial blocks at the edge use what exists.
fn block_mean(grid: &Array2<f32>, factor: usize) -> Array2<f32> {
    let (h, w) = grid.dim();
    Array2::from_shape_fn((h.div_ceil(factor), w.div_ceil(factor)), |(r, c)| {
        let block = grid.slice(ndarray::s![
            r * factor..((r + 1) * factor).min(h),
            c * factor..((c + 1) * factor).min(w)
        ]);
        (block.iter().map(|&v| v as f64).sum::<f64>() / block.len() as f64) as f32
    })
}

/// Builds all 13 bands from 10 m grids of the ten patch bands; atmospheric
/// bands are filled with a constant haze level.
fn assemble(
    raster_id: &str,
    date: NaiveDate,
    cloud_cover: f64,
    ten_m: &[Array2<f32>],
) -> RasterSource {
    let mut bands = BTreeMap::new();
    for name in all_band_names() {
        let resolution = native_resolution(name).expect("known band");
        let factor = (resolution / 10.0) as usize;
        let data = match PATCH_BANDS.iter().position(|b| *b == name) {
            Some(ch) if factor == 1 => ten_m[ch].clone(),
            Some(ch) => block_mean(&ten_m[ch], factor),
            None => {
                let (h, w) = ten_m[0].dim();
                Array2::from_elem((h.div_ceil(factor), w.div_ceil(factor)), 0.12)
            }
        };
        bands.insert(name.to_string(), BandGrid { data, resolution });
    }
    RasterSource {
        raster_id: raster_id.to_string(),
        acquisition_date: date,
        bands,
        geotransform: fixture_geotransform(),
        crs: FIXTURE_CRS,
        cloud_cover,
        nodata: Some(0.0),
    }
}

/// A `size x size` (10 m pixels) scene where every band holds `value`.
pub fn constant_raster(size: usize, value: f32) -> RasterSource {
    let grids = vec![Array2::from_elem((size, size), value); PATCH_BANDS.len()];
    assemble(
        "constant",
        NaiveDate::from_ymd_opt(2020, 6, 1).expect("valid date"),
        0.0,
        &grids,
    )
}

/// Every band's value equals its own (native) row index plus one, in
/// reflectance units of 1e-3. No-data is disabled.
pub fn row_index_raster(size: usize) -> RasterSource {
    let mut raster = constant_raster(size, 0.0);
    for band in raster.bands.values_mut() {
        for (r, mut row) in band.data.axis_iter_mut(Axis(0)).enumerate() {
            row.fill((r + 1) as f32 * 1e-3);
        }
    }
    raster.nodata = None;
    raster
}

/// Renders a scene with each site's motif painted at its location.
pub fn scene_raster(
    raster_id: &str,
    date: NaiveDate,
    cloud_cover: f64,
    size: usize,
    sites: &[SiteRecord],
    seed: u64,
) -> RasterSource {
    let gt = fixture_geotransform();
    let mut canvas = Canvas::new(size, size);
    let mut rng = seed::rng(seed, 0);
    for site in sites {
        let (x, y) = FIXTURE_CRS.project(site.latitude, site.longitude);
        let (col, row) = gt.world_to_pixel(x, y);
        let mut site_rng = seed::rng(seed::derive_seed_str(0, &site.site_id), 1);
        paint(&mut canvas, Recipe::Plant(site.plant_class), row, col, &mut site_rng);
    }
    let spec = SyntheticSceneSpec {
        size,
        ..SyntheticSceneSpec::plant()
    };
    let pixels = render(&canvas, &spec, &mut rng);
    // Synthetic reflectance never reaches exactly zero, which marks no-data.
    let grids: Vec<Array2<f32>> = pixels
        .axis_iter(Axis(0))
        .map(|b| b.mapv(|v| v.max(1e-4)))
        .collect();
    assemble(raster_id, date, cloud_cover, &grids)
}

/// Sites laid out on a grid inside a `size`-pixel scene, at least 1.5 km
/// apart and 600 m from the edges, cycling through the plant classes.
pub fn fixture_sites(n: usize, size: usize) -> Vec<SiteRecord> {
    let gt = fixture_geotransform();
    let spacing = 150.0;
    let per_row = (((size as f64 - 120.0) / spacing).floor() as usize + 1).max(1);
    (0..n)
        .map(|i| {
            let plant = PlantClass::ALL[i % PlantClass::ALL.len()];
            let cooling = plant
                .is_thermal()
                .then(|| CoolingClass::ALL[i % CoolingClass::ALL.len()]);
            let col = 60.0 + spacing * (i % per_row) as f64;
            let row = 60.0 + spacing * (i / per_row) as f64;
            let (x, y) = gt.pixel_to_world(col, row);
            let (lat, lon) = FIXTURE_CRS.unproject(x, y);
            SiteRecord {
                site_id: format!("S{i:03}"),
                latitude: lat,
                longitude: lon,
                plant_class: plant,
                cooling_class: cooling,
            }
        })
        .collect()
}

/// Writes `dates.len()` rasters of the same footprint under `root`, one
/// directory per raster. Returns the raster ids.
pub fn write_fixture_archive(
    root: &Path,
    sites: &[SiteRecord],
    size: usize,
    dates: &[(NaiveDate, f64)],
    seed: u64,
) -> Result<Vec<String>> {
    let mut ids = Vec::with_capacity(dates.len());
    for (i, &(date, cloud)) in dates.iter().enumerate() {
        let id = format!("S2_{}_{i:02}", date.format("%Y%m%d"));
        let raster = scene_raster(&id, date, cloud, size, sites, seed::derive_seed(seed, i as u64));
        raster.write_dir(root.join(&id))?;
        ids.push(id);
    }
    Ok(ids)
}
