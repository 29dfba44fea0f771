mod common;

use chrono::{Duration, NaiveDate};
use ndarray::{s, Array2};
use proptest::prelude::*;

use plantscope::ingest::background::sample_windows;
use plantscope::ingest::fixtures::{constant_raster, fixture_sites, write_fixture_archive};
use plantscope::ingest::provider::{select_rasters, spread_dates, FetchOptions};
use plantscope::ingest::resample::upsample_window;
use plantscope::ingest::{crop_patch, sample_background, upsample_band, LocalProvider, PATCH_BANDS};

use common::geo_oracle::sphere_distance_m;

fn min_gap(dates: &[NaiveDate], picked: &[usize]) -> i64 {
    let mut d: Vec<NaiveDate> = picked.iter().map(|&i| dates[i]).collect();
    d.sort();
    d.windows(2).map(|w| (w[1] - w[0]).num_days()).min().unwrap_or(i64::MAX)
}

/// Best achievable smallest gap over all `n`-subsets.
fn brute_force_gap(dates: &[NaiveDate], n: usize) -> i64 {
    let m = dates.len();
    let mut best = i64::MIN;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let picked: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        best = best.max(min_gap(dates, &picked));
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spread_dates_maximizes_the_smallest_gap(
        days in prop::collection::btree_set(0i64..366, 2..13),
        n in 2usize..7,
    ) {
        let base = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates: Vec<NaiveDate> = days.iter().rev().map(|&d| base + Duration::days(d)).collect();
        let picked = spread_dates(&dates, n);
        prop_assert_eq!(picked.len(), n.min(dates.len()));
        prop_assert!(picked.windows(2).all(|w| dates[w[0]] < dates[w[1]]));
        if dates.len() > n {
            prop_assert_eq!(min_gap(&dates, &picked), brute_force_gap(&dates, n));
        }
    }

    #[test]
    fn channel_order_is_fixed(perm in Just((0..10).collect::<Vec<usize>>()).prop_shuffle()) {
        let mut raster = constant_raster(120, 0.1);
        for (k, name) in PATCH_BANDS.iter().enumerate() {
            raster.bands.get_mut(*name).unwrap().data.fill(0.01 * (perm[k] + 1) as f32);
        }
        let patch = crop_patch(&raster, raster.pixel_to_latlon(60.0, 60.0)).unwrap();
        for k in 0..10 {
            let want = 0.01 * (perm[k] + 1) as f32;
            prop_assert!(patch.pixels.slice(s![k, .., ..]).iter().all(|&v| v == want));
        }
    }

    #[test]
    fn window_of_upsampled_band_is_exact(
        seed in any::<u64>(),
        row0 in 0usize..20,
        col0 in 0usize..20,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coarse = Array2::from_shape_simple_fn((70, 70), || rng.random_range(0.0f32..1.0));
        let (r, c) = (2 * row0, 2 * col0);
        let full = upsample_band(coarse.view(), 20.0).unwrap();
        let window = upsample_window(coarse.view(), 2, r, c, 100, 100);
        prop_assert_eq!(&window, &full.slice(s![r..r + 100, c..c + 100]).to_owned());
        // cropping the coarse grid first agrees away from the one-pixel rim,
        // where the cropped grid has no outside neighbor to blend with
        let cropped = coarse.slice(s![row0..row0 + 50, col0..col0 + 50]).to_owned();
        let crop_first = upsample_band(cropped.view(), 20.0).unwrap();
        prop_assert_eq!(
            crop_first.slice(s![1..99, 1..99]).to_owned(),
            window.slice(s![1..99, 1..99]).to_owned()
        );
    }

    #[test]
    fn background_keeps_out_of_exclusion_radius(
        seed in any::<u64>(),
        radius in 200.0f64..3000.0,
        points in prop::collection::vec((0.0f64..2000.0, 0.0f64..2000.0), 1..6),
    ) {
        let mut geom = constant_raster(120, 0.1).geometry();
        geom.rows = 2000;
        geom.cols = 2000;
        let exclusions: Vec<(f64, f64)> = points.iter().map(|&(c, r)| geom.pixel_to_latlon(c, r)).collect();
        if let Ok(windows) = sample_windows(&geom, 20, &exclusions, radius, seed, |_| true) {
            prop_assert_eq!(windows.len(), 20);
            for w in windows {
                let (cc, cr) = w.center_pixel();
                let center = geom.pixel_to_latlon(cc, cr);
                for &e in &exclusions {
                    prop_assert!(sphere_distance_m(center, e) >= radius);
                }
            }
        }
    }
}

fn candidate_archive(dir: &std::path::Path, dates: &[(NaiveDate, f64)]) -> LocalProvider {
    let sites = fixture_sites(1, 200);
    write_fixture_archive(dir, &sites, 200, dates, 3).unwrap();
    LocalProvider::open(dir).unwrap()
}

#[test]
fn twenty_candidates_give_ten_spread_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let base = NaiveDate::from_ymd_opt(2020, 1, 3).unwrap();
    let mut dates: Vec<(NaiveDate, f64)> = (0..20).map(|i| (base + Duration::days(18 * i), 0.05)).collect();
    dates.push((base + Duration::days(5), 0.6));
    dates.push((base + Duration::days(100), 0.3));
    let provider = candidate_archive(dir.path(), &dates);
    let site = &fixture_sites(1, 200)[0];
    let (picked, shortfall) = select_rasters(site, FetchOptions::default(), &provider).unwrap();
    assert!(!shortfall);
    assert_eq!(picked.len(), 10);
    assert!(picked.iter().all(|m| m.cloud_cover <= 0.1));
    for w in picked.windows(2) {
        assert!((w[1].acquisition_date - w[0].acquisition_date).num_days() >= 20);
    }
}

#[test]
fn shortfall_paths() {
    let dir = tempfile::tempdir().unwrap();
    let base = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
    let dates: Vec<(NaiveDate, f64)> = (0..3).map(|i| (base + Duration::days(30 * i), 0.0)).collect();
    let provider = candidate_archive(dir.path(), &dates);
    let site = &fixture_sites(1, 200)[0];
    let (picked, shortfall) = select_rasters(site, FetchOptions::default(), &provider).unwrap();
    assert_eq!((picked.len(), shortfall), (3, true));

    let cloudy = tempfile::tempdir().unwrap();
    let dates: Vec<(NaiveDate, f64)> = (0..4).map(|i| (base + Duration::days(30 * i), 0.5)).collect();
    let provider = candidate_archive(cloudy.path(), &dates);
    let (picked, shortfall) = select_rasters(site, FetchOptions::default(), &provider).unwrap();
    assert_eq!((picked.len(), shortfall), (0, true));
}

#[test]
fn ingestion_is_pure() {
    let raster = constant_raster(400, 0.3);
    let center = raster.pixel_to_latlon(200.0, 210.0);
    assert_eq!(crop_patch(&raster, center).unwrap(), crop_patch(&raster, center).unwrap());
    let a = sample_background(&raster, 4, &[center], 9, 10).unwrap();
    let b = sample_background(&raster, 4, &[center], 9, 10).unwrap();
    assert_eq!(a, b);
}
