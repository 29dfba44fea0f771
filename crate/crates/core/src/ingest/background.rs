use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::crop::{patch_at, read_window, Window};
use super::patch::{Patch, BACKGROUND_SITE, PATCH_SIZE};
use super::raster::{GridGeometry, RasterSource};
use crate::error::{Error, Result};
use crate::geo::haversine_m;

/// Minimum distance between a background patch center and any catalog site.
pub const EXCLUSION_RADIUS_M: f64 = 1000.0;

/// Placement attempts allowed per requested background window.
pub const ATTEMPTS_PER_WINDOW: usize = 100;

/// Draws `n` patch windows uniformly over the grid whose centers lie at least
/// `radius_m` from every exclusion point and for which `accept` holds.
/// Deterministic given `seed`.
pub fn sample_windows(
    geom: &GridGeometry,
    n: usize,
    exclusions: &[(f64, f64)],
    radius_m: f64,
    seed: u64,
    mut accept: impl FnMut(Window) -> bool,
) -> Result<Vec<Window>> {
    if geom.rows < PATCH_SIZE || geom.cols < PATCH_SIZE {
        return Err(Error::BackgroundPlacement {
            placed: 0,
            requested: n,
            attempts: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = ATTEMPTS_PER_WINDOW * n.max(1);
    let mut placed: Vec<Window> = Vec::with_capacity(n);
    let mut attempts = 0;
    while placed.len() < n {
        if attempts == max_attempts {
            return Err(Error::BackgroundPlacement {
                placed: placed.len(),
                requested: n,
                attempts,
            });
        }
        attempts += 1;
        let window = Window {
            row0: rng.random_range(0..=geom.rows - PATCH_SIZE),
            col0: rng.random_range(0..=geom.cols - PATCH_SIZE),
        };
        if placed.contains(&window) {
            continue;
        }
        let (cc, cr) = window.center_pixel();
        let center = geom.pixel_to_latlon(cc, cr);
        if exclusions.iter().any(|&e| haversine_m(center, e) < radius_m) {
            continue;
        }
        if !accept(window) {
            continue;
        }
        placed.push(window);
    }
    Ok(placed)
}

/// Random background patches from one raster. Windows with no-data pixels are
/// redrawn; centers keep [`EXCLUSION_RADIUS_M`] from every exclusion point.
pub fn sample_background(
    raster: &RasterSource,
    n: usize,
    exclusions: &[(f64, f64)],
    seed: u64,
    background_label: usize,
) -> Result<Vec<Patch>> {
    let windows = sample_windows(
        &raster.geometry(),
        n,
        exclusions,
        EXCLUSION_RADIUS_M,
        seed,
        |w| read_window(raster, w).is_ok(),
    )?;
    windows
        .into_iter()
        .map(|w| patch_at(raster, w, BACKGROUND_SITE, background_label))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::constant_raster;

    #[test]
    fn four_patches_respecting_exclusion() {
        let raster = constant_raster(600, 0.15);
        let site = raster.pixel_to_latlon(300.0, 300.0);
        let patches = sample_background(&raster, 4, &[site], 7, 10).unwrap();
        assert_eq!(patches.len(), 4);
        for p in &patches {
            assert_eq!(p.meta.site_id, "background");
            assert_eq!(p.meta.label, 10);
            assert!(haversine_m(p.meta.center, site) >= EXCLUSION_RADIUS_M);
        }
    }

    #[test]
    fn same_seed_same_centers() {
        let raster = constant_raster(600, 0.15);
        let a = sample_background(&raster, 4, &[], 11, 10).unwrap();
        let b = sample_background(&raster, 4, &[], 11, 10).unwrap();
        let centers = |v: &[Patch]| v.iter().map(|p| p.meta.center).collect::<Vec<_>>();
        assert_eq!(centers(&a), centers(&b));
        let c = sample_background(&raster, 4, &[], 12, 10).unwrap();
        assert_ne!(centers(&a), centers(&c));
    }

    #[test]
    fn impossible_placement_reports_attempts() {
        let raster = constant_raster(120, 0.15);
        let site = raster.pixel_to_latlon(60.0, 60.0);
        match sample_background(&raster, 4, &[site], 1, 10) {
            Err(Error::BackgroundPlacement { attempts, placed, .. }) => {
                assert_eq!(placed, 0);
                assert_eq!(attempts, 400);
            }
            other => panic!("expected placement error, got {other:?}"),
        }
    }

    #[test]
    fn skips_windows_with_nodata() {
        let mut raster = constant_raster(240, 0.15);
        // Left half of B04 is missing: every accepted window must avoid it.
        raster
            .bands
            .get_mut("B04")
            .unwrap()
            .data
            .slice_mut(ndarray::s![.., ..120])
            .fill(0.0);
        let patches = sample_background(&raster, 3, &[], 3, 10).unwrap();
        for p in patches {
            assert!(p.pixels.iter().all(|&v| v > 0.0));
        }
    }
}
