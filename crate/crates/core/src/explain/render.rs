use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use super::CamResult;
use crate::error::{Error, Result};

/// Lower and upper percentile of the contrast stretch.
pub const DEFAULT_STRETCH: (f64, f64) = (2.0, 98.0);

/// Bands shown as red, green and blue: B04, B03, B02.
const RGB_BANDS: [usize; 3] = [2, 1, 0];

const VIRIDIS: [[u8; 3]; 11] = [
    [0x44, 0x01, 0x54],
    [0x48, 0x24, 0x75],
    [0x41, 0x44, 0x87],
    [0x35, 0x5f, 0x8d],
    [0x2a, 0x78, 0x8e],
    [0x21, 0x91, 0x8c],
    [0x22, 0xa8, 0x84],
    [0x44, 0xbf, 0x70],
    [0x7a, 0xd1, 0x51],
    [0xbd, 0xdf, 0x26],
    [0xfd, 0xe7, 0x25],
];

/// Viridis color of `t` in [0, 1], interpolated between eleven stops.
pub fn colormap(t: f64) -> [f64; 3] {
    let s = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (s.floor() as usize).min(VIRIDIS.len() - 2);
    let f = s - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [0, 1, 2].map(|k| a[k] as f64 * (1.0 - f) + b[k] as f64 * f)
}

fn percentile(sorted: &[f32], p: f64) -> f64 {
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let f = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - f) + sorted[hi] as f64 * f
}

/// True-color view of a reflectance patch: B04/B03/B02 as R/G/B, each band
/// stretched between its `stretch` percentiles. Constant bands are mid gray.
pub fn rgb_composite(pixels: &Array3<f32>, stretch: (f64, f64)) -> Result<RgbImage> {
    let (bands, h, w) = pixels.dim();
    if bands <= RGB_BANDS[0] || h == 0 || w == 0 {
        return Err(Error::Shape(format!("need at least 3 bands, got {:?}", pixels.dim())));
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for (k, &b) in RGB_BANDS.iter().enumerate() {
        let band = pixels.index_axis(Axis(0), b);
        let mut sorted: Vec<f32> = band.iter().copied().collect();
        sorted.sort_by(f32::total_cmp);
        let lo = percentile(&sorted, stretch.0);
        let hi = percentile(&sorted, stretch.1);
        for ((r, c), &v) in band.indexed_iter() {
            let t = if hi > lo { ((v as f64 - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
            img.get_pixel_mut(c as u32, r as u32)[k] = (t * 255.0).round() as u8;
        }
    }
    Ok(img)
}

/// The heatmap in viridis colors.
pub fn cam_image(cam: &CamResult) -> RgbImage {
    let (h, w) = cam.heatmap.dim();
    RgbImage::from_fn(w as u32, h as u32, |c, r| {
        Rgb(colormap(cam.heatmap[[r as usize, c as usize]]).map(|v| v.round() as u8))
    })
}

/// `(1 - alpha) * rgb + alpha * viridis(heatmap)`, per pixel and channel.
pub fn overlay(rgb: &RgbImage, cam: &CamResult, alpha: f64) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("alpha {alpha} is outside [0, 1]")));
    }
    let (h, w) = cam.heatmap.dim();
    if (rgb.width() as usize, rgb.height() as usize) != (w, h) {
        return Err(Error::Shape(format!(
            "image is {}x{}, heatmap is {w}x{h}",
            rgb.width(),
            rgb.height()
        )));
    }
    Ok(RgbImage::from_fn(w as u32, h as u32, |c, r| {
        let base = rgb.get_pixel(c, r);
        let color = colormap(cam.heatmap[[r as usize, c as usize]]);
        Rgb([0, 1, 2].map(|k| ((1.0 - alpha) * base[k] as f64 + alpha * color[k]).round() as u8))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamSidecar {
    pub patch: String,
    pub class_index: usize,
    pub class_name: String,
    pub predicted_class: usize,
    pub logit: f64,
    pub constant: bool,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct CamOutputs {
    pub rgb: PathBuf,
    pub cam: PathBuf,
    pub overlay: PathBuf,
    pub sidecar: PathBuf,
}

/// Writes `<stem>_rgb.png`, `<stem>_cam.png`, `<stem>_overlay.png` and
/// `<stem>_cam.json` into `dir`.
pub fn write_cam_outputs(
    dir: impl AsRef<Path>,
    stem: &str,
    rgb: &RgbImage,
    cam: &CamResult,
    sidecar: &CamSidecar,
) -> Result<CamOutputs> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = CamOutputs {
        rgb: dir.join(format!("{stem}_rgb.png")),
        cam: dir.join(format!("{stem}_cam.png")),
        overlay: dir.join(format!("{stem}_overlay.png")),
        sidecar: dir.join(format!("{stem}_cam.json")),
    };
    let save = |img: &RgbImage, path: &Path| img.save(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())));
    save(rgb, &out.rgb)?;
    save(&cam_image(cam), &out.cam)?;
    save(&overlay(rgb, cam, sidecar.alpha)?, &out.overlay)?;
    let mut json = serde_json::to_string_pretty(sidecar).map_err(|e| Error::json("cam sidecar", e))?;
    json.push('\n');
    fs::write(&out.sidecar, json).map_err(|e| Error::io(&out.sidecar, e))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn ramp(h: usize, w: usize) -> CamResult {
        CamResult {
            heatmap: Array2::from_shape_fn((h, w), |(r, c)| (r + c) as f64 / (h + w - 2) as f64),
            class_index: 0,
            logit: 0.0,
            raw_map: Array2::zeros((2, 2)),
            constant: false,
        }
    }

    #[test]
    fn constant_patch_is_gray() {
        let img = rgb_composite(&Array3::from_elem((10, 5, 5), 0.2), DEFAULT_STRETCH).unwrap();
        assert!(img.pixels().all(|p| p.0 == [128, 128, 128]));
    }

    #[test]
    fn full_stretch_is_linear() {
        let px = Array3::from_shape_fn((10, 4, 4), |(_, r, c)| (r * 4 + c) as f32 / 15.0);
        let img = rgb_composite(&px, (0.0, 100.0)).unwrap();
        for (c, r, p) in img.enumerate_pixels() {
            let v = ((r * 4 + c) as f64 / 15.0 * 255.0).round() as u8;
            assert_eq!(p.0, [v, v, v]);
        }
    }

    #[test]
    fn swapping_blue_and_red_bands() {
        let px = Array3::from_shape_fn((10, 6, 6), |(b, r, c)| ((b + 1) * (r * 6 + c + 1)) as f32 % 7.0);
        let mut swapped = px.clone();
        swapped.index_axis_mut(Axis(0), 0).assign(&px.index_axis(Axis(0), 2));
        swapped.index_axis_mut(Axis(0), 2).assign(&px.index_axis(Axis(0), 0));
        let a = rgb_composite(&px, DEFAULT_STRETCH).unwrap();
        let b = rgb_composite(&swapped, DEFAULT_STRETCH).unwrap();
        for (p, q) in a.pixels().zip(b.pixels()) {
            assert_eq!([p[0], p[1], p[2]], [q[2], q[1], q[0]]);
        }
    }

    #[test]
    fn overlay_endpoints_and_midpoint() {
        let rgb = RgbImage::from_fn(5, 4, |c, r| Rgb([c as u8 * 40, r as u8 * 50, 200]));
        let cam = ramp(4, 5);
        assert_eq!(overlay(&rgb, &cam, 0.0).unwrap(), rgb);
        assert_eq!(overlay(&rgb, &cam, 1.0).unwrap(), cam_image(&cam));
        let half = overlay(&rgb, &cam, 0.5).unwrap();
        let color = colormap(cam.heatmap[[2, 3]]);
        let base = rgb.get_pixel(3, 2);
        for k in 0..3 {
            let expected = (0.5 * base[k] as f64 + 0.5 * color[k]).round() as u8;
            assert_eq!(half.get_pixel(3, 2)[k], expected);
        }
        assert!(overlay(&rgb, &ramp(5, 5), 0.5).is_err());
    }

    #[test]
    fn colormap_stops() {
        assert_eq!(colormap(0.0), [68.0, 1.0, 84.0]);
        assert_eq!(colormap(1.0), [253.0, 231.0, 37.0]);
        assert_eq!(colormap(0.5), [0x21 as f64, 0x91 as f64, 0x8c as f64]);
    }
}
