use ndarray::Array3;

use super::patch::{Patch, PatchMeta, PATCH_CHANNELS, PATCH_PIXEL_SIZE, PATCH_SIZE};
use super::raster::{select_bands, GridGeometry, RasterSource};
use super::resample::{upsample_factor, upsample_window, TARGET_RESOLUTION};
use crate::error::{Error, Result};

/// A patch-sized window on the 10 m reference grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub row0: usize,
    pub col0: usize,
}

impl Window {
    /// Continuous pixel coordinate (col, row) of the window center.
    pub fn center_pixel(&self) -> (f64, f64) {
        let half = PATCH_SIZE as f64 / 2.0;
        (self.col0 as f64 + half, self.row0 as f64 + half)
    }
}

/// Window whose center is nearest to the continuous pixel position (col, row).
pub fn window_around(geom: &GridGeometry, raster_id: &str, col: f64, row: f64) -> Result<Window> {
    let half = PATCH_SIZE as f64 / 2.0;
    let row0 = (row - half).round() as i64;
    let col0 = (col - half).round() as i64;
    if row0 < 0
        || col0 < 0
        || row0 as usize + PATCH_SIZE > geom.rows
        || col0 as usize + PATCH_SIZE > geom.cols
    {
        return Err(Error::WindowOutOfBounds {
            raster: raster_id.to_string(),
            row: row0,
            col: col0,
            rows: geom.rows,
            cols: geom.cols,
        });
    }
    Ok(Window {
        row0: row0 as usize,
        col0: col0 as usize,
    })
}

/// Locates the window for a geographic center (lat, lon) on a grid.
pub fn locate_window_in(geom: &GridGeometry, raster_id: &str, center: (f64, f64)) -> Result<Window> {
    let (col, row) = geom.latlon_to_pixel(center.0, center.1);
    if !geom.contains_pixel(col, row) {
        return Err(Error::CenterOutside {
            raster: raster_id.to_string(),
            lat: center.0,
            lon: center.1,
        });
    }
    window_around(geom, raster_id, col, row)
}

/// Locates the window for a geographic center without reading pixels.
pub fn locate_window(raster: &RasterSource, center: (f64, f64)) -> Result<Window> {
    locate_window_in(&raster.geometry(), &raster.raster_id, center)
}

/// Upsampled 10-band pixels of a window, in reflectance.
pub fn read_window(raster: &RasterSource, window: Window) -> Result<Array3<f32>> {
    check_reference_grid(raster)?;
    let bands = select_bands(raster)?;
    let mut out = Array3::<f32>::zeros((PATCH_CHANNELS, PATCH_SIZE, PATCH_SIZE));
    for (ch, band) in bands.iter().enumerate() {
        let factor = upsample_factor(band.resolution)?;
        if let Some(fraction) = nodata_fraction(raster, band, factor, window) {
            return Err(Error::NoData {
                band: super::raster::PATCH_BANDS[ch].to_string(),
                fraction,
            });
        }
        let grid = upsample_window(
            band.data.view(),
            factor,
            window.row0,
            window.col0,
            PATCH_SIZE,
            PATCH_SIZE,
        );
        out.index_axis_mut(ndarray::Axis(0), ch).assign(&grid);
    }
    Ok(out)
}

fn check_reference_grid(raster: &RasterSource) -> Result<()> {
    let res = raster.reference_resolution();
    if (res - TARGET_RESOLUTION).abs() > 1e-6 {
        return Err(Error::Geotransform(format!(
            "raster {} reference grid is {res} m/pixel, expected {TARGET_RESOLUTION}",
            raster.raster_id
        )));
    }
    Ok(())
}

/// Fraction of no-data source pixels feeding the window, or `None` when clean.
/// The source footprint includes the one-pixel bilinear margin.
fn nodata_fraction(
    raster: &RasterSource,
    band: &super::raster::BandGrid,
    factor: usize,
    window: Window,
) -> Option<f64> {
    let (h, w) = band.data.dim();
    let lo = |start: usize| (start / factor).saturating_sub((factor > 1) as usize);
    let hi = |start: usize, n: usize| ((start + PATCH_SIZE).div_ceil(factor) + (factor > 1) as usize).min(n);
    let (r0, r1) = (lo(window.row0), hi(window.row0, h));
    let (c0, c1) = (lo(window.col0), hi(window.col0, w));
    if r0 >= r1 || c0 >= c1 {
        return Some(1.0);
    }
    let region = band.data.slice(ndarray::s![r0..r1, c0..c1]);
    let bad = region
        .iter()
        .filter(|&&v| !v.is_finite() || raster.nodata == Some(v))
        .count();
    (bad > 0).then(|| bad as f64 / region.len() as f64)
}

/// Assembles the patch for a window, with its georeference.
pub fn patch_at(
    raster: &RasterSource,
    window: Window,
    site_id: &str,
    label: usize,
) -> Result<Patch> {
    let pixels = read_window(raster, window)?;
    let (cc, cr) = window.center_pixel();
    Patch::new(
        pixels,
        PatchMeta {
            site_id: site_id.to_string(),
            label,
            raster_id: raster.raster_id.clone(),
            date: raster.acquisition_date,
            center: raster.pixel_to_latlon(cc, cr),
            pixel_size: PATCH_PIXEL_SIZE,
            cooling_class: None,
            crs: Some(raster.crs),
            geotransform: Some(
                raster
                    .geotransform
                    .window(window.col0 as f64, window.row0 as f64),
            ),
        },
    )
}

/// Crops the 1 km square around `center` (lat, lon) from all ten bands,
/// upsampled to 10 m. The window is aligned to the nearest pixel.
pub fn crop_patch(raster: &RasterSource, center: (f64, f64)) -> Result<Patch> {
    let window = locate_window(raster, center)?;
    patch_at(raster, window, "", 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_m;
    use crate::ingest::fixtures::{constant_raster, row_index_raster};

    #[test]
    fn full_scene_center_offset() {
        // A 10980 px Sentinel-2 tile; only the grid geometry matters here.
        let mut geom = constant_raster(120, 0.2).geometry();
        geom.rows = 10980;
        geom.cols = 10980;
        let center = geom.pixel_to_latlon(5490.0, 5490.0);
        let window = locate_window_in(&geom, "T33UVT", center).unwrap();
        assert_eq!(window, Window { row0: 5440, col0: 5440 });
    }

    #[test]
    fn edge_margin_is_out_of_bounds() {
        let raster = constant_raster(600, 0.2);
        // 400 m = 40 px from the left edge, vertically centered.
        let center = raster.pixel_to_latlon(40.0, 300.0);
        assert!(matches!(
            crop_patch(&raster, center),
            Err(Error::WindowOutOfBounds { .. })
        ));
        let outside = raster.pixel_to_latlon(-10.0, 300.0);
        assert!(matches!(crop_patch(&raster, outside), Err(Error::CenterOutside { .. })));
    }

    #[test]
    fn windowing_preserves_values() {
        let raster = row_index_raster(400);
        let center = raster.pixel_to_latlon(200.0, 200.0);
        let patch = crop_patch(&raster, center).unwrap();
        assert_eq!(patch.pixels.dim(), (10, 100, 100));
        let b02 = patch.pixels.index_axis(ndarray::Axis(0), 0);
        for r in 1..100 {
            assert!(b02[[r, 0]] > b02[[r - 1, 0]]);
        }
        let center_err = haversine_m(center, patch.meta.center);
        assert!(center_err <= 10.0, "{center_err}");
    }

    #[test]
    fn nodata_is_reported() {
        let mut raster = constant_raster(400, 0.2);
        raster.bands.get_mut("B11").unwrap().data[[100, 100]] = 0.0;
        let center = raster.pixel_to_latlon(200.0, 200.0);
        match crop_patch(&raster, center) {
            Err(Error::NoData { band, fraction }) => {
                assert_eq!(band, "B11");
                assert!(fraction > 0.0 && fraction < 0.01);
            }
            other => panic!("expected no-data error, got {other:?}"),
        }
    }
}
