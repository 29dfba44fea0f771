//! Desk-scale synthetic scenes.
//!
//! Each class is drawn as a geometric motif made of one or two surface
//! materials over a correlated vegetation/soil background:
//!
//! | class | motif |
//! |---|---|
//! | Brown Coal | large lignite pit plus a concrete block |
//! | Gas | two or three bluish industrial roofs |
//! | Hard Coal | dark coal piles plus a concrete block |
//! | Oil | four to seven bright metal storage tanks |
//! | Pumped Storage | round reservoir inside a rock embankment ring |
//! | Run-of-River | river band crossed by a concrete dam |
//! | Reservoir | large lake bordered by conifer forest |
//! | Nuclear | two large cooling-tower disks plus a red-roof block |
//! | Solar | striped panel field on gravel |
//! | Wind Onshore | gravel turbine pads linked by gravel roads |
//! | Background | no motif |
//!
//! Cooling-task scenes draw a red-roof plant block plus the cooling motif:
//! metal condenser grids (air), concrete cell rows (mechanical draft), large
//! tower disks (natural draft) or a river band (once-through). The cooling
//! materials are shared with plant classes, so features learned on the plant
//! task carry over.
//!
//! Every material has a distinct spectrum, which makes the classes separable
//! from per-band means alone.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classes::{CoolingClass, PlantClass, Task};
use crate::error::{Error, Result};
use crate::ingest::patch::{Patch, PatchMeta, PATCH_CHANNELS, PATCH_PIXEL_SIZE, PATCH_SIZE};
use crate::seed;

/// Parameters of the synthetic scene generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub task: Task,
    /// Edge length in pixels.
    pub size: usize,
    /// White sensor noise, reflectance units.
    pub noise_std: f32,
    /// Box-blur radius of the background texture, pixels.
    pub correlation_length: usize,
    /// Largest soil fraction mixed into the vegetation background.
    pub land_variation: f32,
    /// Largest offset of the motif from the patch center, pixels.
    pub jitter: usize,
}

impl SyntheticSceneSpec {
    pub fn plant() -> Self {
        SyntheticSceneSpec {
            task: Task::Plant,
            size: PATCH_SIZE,
            noise_std: 0.005,
            correlation_length: 6,
            land_variation: 0.5,
            jitter: 10,
        }
    }

    pub fn cooling() -> Self {
        SyntheticSceneSpec {
            task: Task::Cooling,
            ..Self::plant()
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Plant => Self::plant(),
            Task::Cooling => Self::cooling(),
        }
    }
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self::plant()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum Material {
    Concrete = 1,
    IndustrialRoof,
    RedRoof,
    Coal,
    LignitePit,
    Metal,
    Tower,
    Water,
    Rock,
    Panel,
    Gravel,
    Conifer,
}

const MATERIALS: [Material; 12] = [
    Material::Concrete,
    Material::IndustrialRoof,
    Material::RedRoof,
    Material::Coal,
    Material::LignitePit,
    Material::Metal,
    Material::Tower,
    Material::Water,
    Material::Rock,
    Material::Panel,
    Material::Gravel,
    Material::Conifer,
];

type Spectrum = [f32; PATCH_CHANNELS];

// B02 B03 B04 B05 B06 B07 B08 B8A B11 B12
const VEGETATION: Spectrum = [0.035, 0.065, 0.040, 0.10, 0.24, 0.29, 0.32, 0.34, 0.20, 0.10];
const SOIL: Spectrum = [0.08, 0.10, 0.13, 0.16, 0.19, 0.21, 0.22, 0.23, 0.30, 0.26];

impl Material {
    fn spectrum(self) -> Spectrum {
        match self {
            Material::Concrete => [0.17, 0.18, 0.19, 0.20, 0.21, 0.21, 0.22, 0.22, 0.24, 0.22],
            Material::IndustrialRoof => [0.22, 0.20, 0.17, 0.16, 0.16, 0.16, 0.16, 0.16, 0.14, 0.12],
            Material::RedRoof => [0.07, 0.08, 0.19, 0.22, 0.23, 0.24, 0.25, 0.25, 0.28, 0.24],
            Material::Coal => [0.03, 0.03, 0.03, 0.03, 0.035, 0.035, 0.04, 0.04, 0.045, 0.045],
            Material::LignitePit => [0.06, 0.075, 0.09, 0.11, 0.12, 0.13, 0.14, 0.15, 0.20, 0.21],
            Material::Metal => [0.34, 0.35, 0.36, 0.36, 0.36, 0.36, 0.37, 0.37, 0.33, 0.29],
            Material::Tower => [0.26, 0.27, 0.28, 0.28, 0.28, 0.28, 0.28, 0.28, 0.22, 0.17],
            Material::Water => [0.06, 0.05, 0.035, 0.025, 0.015, 0.012, 0.010, 0.009, 0.004, 0.003],
            Material::Rock => [0.20, 0.21, 0.22, 0.23, 0.24, 0.25, 0.26, 0.26, 0.33, 0.27],
            Material::Panel => [0.10, 0.09, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.09, 0.08],
            Material::Gravel => [0.16, 0.17, 0.18, 0.19, 0.20, 0.21, 0.22, 0.22, 0.29, 0.26],
            Material::Conifer => [0.02, 0.035, 0.02, 0.06, 0.14, 0.17, 0.19, 0.20, 0.10, 0.05],
        }
    }

    fn from_code(code: u8) -> Option<Material> {
        MATERIALS.get((code as usize).wrapping_sub(1)).copied()
    }
}

/// What to draw at a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Plant(PlantClass),
    Cooling(CoolingClass),
    Background,
}

impl Recipe {
    pub fn for_label(task: Task, index: usize) -> Result<Recipe> {
        match task {
            Task::Plant if index < PlantClass::ALL.len() => Ok(Recipe::Plant(PlantClass::ALL[index])),
            Task::Plant if index == PlantClass::ALL.len() => Ok(Recipe::Background),
            Task::Cooling if index < CoolingClass::ALL.len() => {
                Ok(Recipe::Cooling(CoolingClass::ALL[index]))
            }
            _ => Err(Error::ClassOutOfRange {
                index,
                classes: task.num_classes(),
            }),
        }
    }
}

/// Material codes (0 = none) on a pixel grid.
pub(crate) struct Canvas {
    codes: Array2<u8>,
}

impl Canvas {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        Canvas {
            codes: Array2::zeros((rows, cols)),
        }
    }

    fn fill_where(&mut self, bbox: (f64, f64, f64, f64), m: Material, inside: impl Fn(f64, f64) -> bool) {
        let (rows, cols) = self.codes.dim();
        let (r0, r1, c0, c1) = bbox;
        let r_lo = r0.floor().max(0.0) as usize;
        let r_hi = (r1.ceil().max(0.0) as usize).min(rows);
        let c_lo = c0.floor().max(0.0) as usize;
        let c_hi = (c1.ceil().max(0.0) as usize).min(cols);
        for r in r_lo..r_hi {
            for c in c_lo..c_hi {
                if inside(r as f64 + 0.5, c as f64 + 0.5) {
                    self.codes[[r, c]] = m as u8;
                }
            }
        }
    }

    fn rect(&mut self, top: f64, left: f64, h: f64, w: f64, m: Material) {
        self.fill_where((top, top + h, left, left + w), m, |_, _| true);
    }

    fn disk(&mut self, cy: f64, cx: f64, radius: f64, m: Material) {
        let bbox = (cy - radius, cy + radius, cx - radius, cx + radius);
        self.fill_where(bbox, m, |y, x| (y - cy).powi(2) + (x - cx).powi(2) <= radius * radius);
    }

    fn ring(&mut self, cy: f64, cx: f64, inner: f64, outer: f64, m: Material) {
        let bbox = (cy - outer, cy + outer, cx - outer, cx + outer);
        self.fill_where(bbox, m, |y, x| {
            let d2 = (y - cy).powi(2) + (x - cx).powi(2);
            d2 <= outer * outer && d2 > inner * inner
        });
    }

    /// Thick segment from (y0, x0) to (y1, x1).
    fn line(&mut self, y0: f64, x0: f64, y1: f64, x1: f64, width: f64, m: Material) {
        let half = width / 2.0;
        let bbox = (y0.min(y1) - half, y0.max(y1) + half, x0.min(x1) - half, x0.max(x1) + half);
        let (dy, dx) = (y1 - y0, x1 - x0);
        let len2 = (dy * dy + dx * dx).max(1e-12);
        self.fill_where(bbox, m, |y, x| {
            let t = (((y - y0) * dy + (x - x0) * dx) / len2).clamp(0.0, 1.0);
            let (py, px) = (y0 + t * dy, x0 + t * dx);
            (y - py).powi(2) + (x - px).powi(2) <= half * half
        });
    }

    pub(crate) fn mask(&self) -> Array2<bool> {
        self.codes.mapv(|c| c != 0)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Draws `recipe` centered at (cy, cx). Motifs stay within 38 px of the center.
pub(crate) fn paint(canvas: &mut Canvas, recipe: Recipe, cy: f64, cx: f64, rng: &mut ChaCha8Rng) {
    use Material as M;
    match recipe {
        Recipe::Background => {}
        Recipe::Plant(PlantClass::BrownCoal) => {
            let (h, w) = (uniform(rng, 24.0, 32.0), uniform(rng, 26.0, 36.0));
            canvas.rect(cy - h / 2.0, cx - w / 2.0, h, w, M::LignitePit);
            canvas.rect(cy - h / 2.0 - 9.0, cx - 4.0, 7.0, 9.0, M::Concrete);
        }
        Recipe::Plant(PlantClass::Gas) => {
            let blocks = rng.random_range(2..=3);
            for i in 0..blocks {
                let (h, w) = (uniform(rng, 8.0, 12.0), uniform(rng, 10.0, 16.0));
                let dy = (i as f64 - 1.0) * 14.0;
                canvas.rect(cy + dy - h / 2.0, cx - w / 2.0 + uniform(rng, -6.0, 6.0), h, w, M::IndustrialRoof);
            }
        }
        Recipe::Plant(PlantClass::HardCoal) => {
            for dx in [-11.0, 11.0] {
                let (h, w) = (uniform(rng, 14.0, 20.0), uniform(rng, 9.0, 13.0));
                canvas.rect(cy - h / 2.0, cx + dx - w / 2.0, h, w, M::Coal);
            }
            canvas.rect(cy + 13.0, cx - 5.0, 7.0, 10.0, M::Concrete);
        }
        Recipe::Plant(PlantClass::Oil) => {
            let tanks = rng.random_range(4..=7);
            for i in 0..tanks {
                let angle = i as f64 / tanks as f64 * std::f64::consts::TAU + uniform(rng, 0.0, 0.3);
                let r = uniform(rng, 4.0, 5.5);
                canvas.disk(cy + 14.0 * angle.sin(), cx + 14.0 * angle.cos(), r, M::Metal);
            }
        }
        Recipe::Plant(PlantClass::HydroPumpedStorage) => {
            let r = uniform(rng, 11.0, 15.0);
            canvas.ring(cy, cx, r, r + 4.0, M::Rock);
            canvas.disk(cy, cx, r, M::Water);
        }
        Recipe::Plant(PlantClass::HydroRunOfRiver) => {
            let width = uniform(rng, 8.0, 12.0);
            let tilt = uniform(rng, -8.0, 8.0);
            canvas.line(cy - tilt, cx - 38.0, cy + tilt, cx + 38.0, width, M::Water);
            canvas.line(cy - width, cx, cy + width, cx, 4.0, M::Concrete);
        }
        Recipe::Plant(PlantClass::HydroReservoir) => {
            let r = uniform(rng, 17.0, 22.0);
            canvas.disk(cy, cx, r + 6.0, M::Conifer);
            canvas.disk(cy, cx, r, M::Water);
        }
        Recipe::Plant(PlantClass::Nuclear) => {
            for dx in [-10.0, 10.0] {
                canvas.disk(cy - 6.0, cx + dx, uniform(rng, 7.0, 9.0), M::Tower);
            }
            canvas.rect(cy + 6.0, cx - 8.0, 8.0, 16.0, M::RedRoof);
        }
        Recipe::Plant(PlantClass::Solar) => {
            let (h, w) = (uniform(rng, 22.0, 30.0), uniform(rng, 30.0, 40.0));
            let top = cy - h / 2.0;
            canvas.rect(top, cx - w / 2.0, h, w, M::Gravel);
            let mut y = top;
            while y + 3.0 <= top + h {
                canvas.rect(y, cx - w / 2.0, 3.0, w, M::Panel);
                y += 4.0;
            }
        }
        Recipe::Plant(PlantClass::WindOnshore) => {
            let pads = rng.random_range(4..=6);
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..pads {
                let y = cy + uniform(rng, -30.0, 30.0);
                let x = cx - 30.0 + 60.0 * i as f64 / (pads - 1) as f64;
                if let Some((py, px)) = prev {
                    canvas.line(py, px, y, x, 2.0, M::Gravel);
                }
                canvas.rect(y - 3.5, x - 3.5, 7.0, 7.0, M::Gravel);
                prev = Some((y, x));
            }
        }
        Recipe::Cooling(cooling) => {
            canvas.rect(cy - 4.0, cx - 22.0, 10.0, 12.0, M::RedRoof);
            match cooling {
                CoolingClass::AirCooling => {
                    for i in 0..2 {
                        for j in 0..4 {
                            canvas.rect(cy - 10.0 + 6.0 * i as f64, cx - 4.0 + 6.0 * j as f64, 5.0, 5.0, M::Metal);
                        }
                    }
                }
                CoolingClass::MechanicalDraftTower => {
                    let cells = rng.random_range(4..=6);
                    for j in 0..cells {
                        canvas.rect(cy + 8.0, cx - 8.0 + 6.0 * j as f64, 5.0, 5.0, M::Concrete);
                        canvas.rect(cy - 12.0, cx - 8.0 + 6.0 * j as f64, 5.0, 5.0, M::Concrete);
                    }
                }
                CoolingClass::NaturalDraftTower => {
                    let towers = rng.random_range(1..=2);
                    for j in 0..towers {
                        canvas.disk(cy, cx + 2.0 + 22.0 * j as f64, uniform(rng, 9.0, 11.0), M::Tower);
                    }
                }
                CoolingClass::OnceThrough => {
                    let width = uniform(rng, 8.0, 12.0);
                    canvas.line(cy + 20.0, cx - 38.0, cy + 20.0 + uniform(rng, -6.0, 6.0), cx + 38.0, width, M::Water);
                }
            }
        }
    }
}

/// Unit-variance correlated noise: white noise smoothed by two box blurs.
pub(crate) fn correlated_field(rows: usize, cols: usize, radius: usize, rng: &mut ChaCha8Rng) -> Array2<f32> {
    let white = Array2::from_shape_simple_fn((rows, cols), || {
        let v: f64 = StandardNormal.sample(rng);
        v as f32
    });
    if radius == 0 {
        return white;
    }
    let blurred = box_blur(&box_blur(&white, radius), radius);
    let n = blurred.len() as f64;
    let mean = blurred.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = blurred.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    blurred.mapv(|v| ((v as f64 - mean) * scale) as f32)
}

fn box_blur(a: &Array2<f32>, radius: usize) -> Array2<f32> {
    let blur_rows = |a: &Array2<f32>| {
        let (rows, cols) = a.dim();
        let mut out = Array2::<f32>::zeros((rows, cols));
        for r in 0..rows {
            let mut prefix = vec![0.0f64; cols + 1];
            for c in 0..cols {
                prefix[c + 1] = prefix[c] + a[[r, c]] as f64;
            }
            for c in 0..cols {
                let lo = c.saturating_sub(radius);
                let hi = (c + radius + 1).min(cols);
                out[[r, c]] = ((prefix[hi] - prefix[lo]) / (hi - lo) as f64) as f32;
            }
        }
        out
    };
    let horizontal = blur_rows(a);
    blur_rows(&horizontal.reversed_axes().to_owned())
        .reversed_axes()
        .as_standard_layout()
        .to_owned()
}

/// Converts a painted canvas into reflectance over a textured background.
pub(crate) fn render(canvas: &Canvas, spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Array3<f32> {
    let (rows, cols) = canvas.codes.dim();
    let land = correlated_field(rows, cols, spec.correlation_length, rng);
    let texture = correlated_field(rows, cols, 1, rng);
    let mut out = Array3::<f32>::zeros((PATCH_CHANNELS, rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let base: Spectrum = match Material::from_code(canvas.codes[[r, c]]) {
                Some(m) => m.spectrum(),
                None => {
                    let soil = (spec.land_variation * (0.5 + 0.25 * land[[r, c]])).clamp(0.0, 1.0);
                    std::array::from_fn(|b| (1.0 - soil) * VEGETATION[b] + soil * SOIL[b])
                }
            };
            let shade = 1.0 + 0.04 * texture[[r, c]];
            for (b, &v) in base.iter().enumerate() {
                let noise: f64 = StandardNormal.sample(rng);
                out[[b, r, c]] = (v * shade + spec.noise_std * noise as f32).max(0.0);
            }
        }
    }
    out
}

/// Generates one synthetic patch and the mask of its motif pixels.
pub fn generate_synthetic_with_mask(
    class_index: usize,
    seed: u64,
    spec: &SyntheticSceneSpec,
) -> Result<(Patch, Array2<bool>)> {
    let recipe = Recipe::for_label(spec.task, class_index)?;
    let mut rng = seed::rng(seed, class_index as u64);
    let size = spec.size;
    let mut canvas = Canvas::new(size, size);
    let j = spec.jitter as f64;
    let cy = size as f64 / 2.0 + if j > 0.0 { uniform(&mut rng, -j, j) } else { 0.0 };
    let cx = size as f64 / 2.0 + if j > 0.0 { uniform(&mut rng, -j, j) } else { 0.0 };
    paint(&mut canvas, recipe, cy, cx, &mut rng);
    let pixels = render(&canvas, spec, &mut rng);
    let mask = canvas.mask();
    let patch = Patch {
        pixels,
        meta: PatchMeta {
            site_id: format!("synthetic-{class_index}-{seed}"),
            label: class_index,
            raster_id: "synthetic".into(),
            date: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            center: (0.0, 0.0),
            pixel_size: PATCH_PIXEL_SIZE,
            cooling_class: match recipe {
                Recipe::Cooling(c) => Some(c),
                _ => None,
            },
            crs: None,
            geotransform: None,
        },
    };
    Ok((patch, mask))
}

/// Generates one synthetic patch for `class_index` of the spec's task.
/// Deterministic given (class_index, seed, spec).
pub fn generate_synthetic(class_index: usize, seed: u64, spec: &SyntheticSceneSpec) -> Result<Patch> {
    generate_synthetic_with_mask(class_index, seed, spec).map(|(p, _)| p)
}

/// Per-band spatial means, the features of the linear-probe check.
pub fn band_means(pixels: &Array3<f32>) -> Vec<f64> {
    pixels
        .axis_iter(Axis(0))
        .map(|band| band.iter().map(|&v| v as f64).sum::<f64>() / band.len() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_has_no_motif() {
        let (patch, mask) = generate_synthetic_with_mask(10, 3, &SyntheticSceneSpec::plant()).unwrap();
        assert!(!mask.iter().any(|&m| m));
        assert_eq!(patch.pixels.dim(), (10, 100, 100));
        patch.validate().unwrap();
    }

    #[test]
    fn motifs_are_inside_the_patch() {
        let spec = SyntheticSceneSpec::plant();
        for class in 0..10 {
            for seed in 0..5 {
                let (_, mask) = generate_synthetic_with_mask(class, seed, &spec).unwrap();
                let area = mask.iter().filter(|&&m| m).count();
                assert!(area > 150, "class {class} seed {seed}: area {area}");
                assert!(area < 4000, "class {class} seed {seed}: area {area}");
            }
        }
        for class in 0..4 {
            let (p, mask) = generate_synthetic_with_mask(class, 1, &SyntheticSceneSpec::cooling()).unwrap();
            assert!(mask.iter().any(|&m| m));
            assert_eq!(p.meta.cooling_class, Some(CoolingClass::ALL[class]));
        }
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSceneSpec::plant();
        let a = generate_synthetic(4, 99, &spec).unwrap();
        let b = generate_synthetic(4, 99, &spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(4, 100, &spec).unwrap();
        assert_ne!(a.pixels, c.pixels);
    }

    #[test]
    fn invalid_class() {
        assert!(matches!(
            generate_synthetic(11, 0, &SyntheticSceneSpec::plant()),
            Err(Error::ClassOutOfRange { index: 11, classes: 11 })
        ));
        assert!(generate_synthetic(4, 0, &SyntheticSceneSpec::cooling()).is_err());
    }

    #[test]
    fn correlated_field_is_standardized() {
        let mut rng = seed::rng(1, 1);
        let f = correlated_field(64, 64, 4, &mut rng);
        let n = f.len() as f64;
        let mean = f.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = f.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-4);
        // neighbours are strongly correlated
        let lag1: f64 = (0..64)
            .flat_map(|r| (0..63).map(move |c| (r, c)))
            .map(|(r, c)| f[[r, c]] as f64 * f[[r, c + 1]] as f64)
            .sum::<f64>()
            / (64.0 * 63.0);
        assert!(lag1 > 0.7, "{lag1}");
    }
}
