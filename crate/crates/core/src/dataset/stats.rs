use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PATCH_BANDS;

/// Per-band mean and population standard deviation, reflectance units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Which patches contribute to the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsScope {
    /// Every patch in the manifest, background included.
    #[default]
    AllImages,
    /// Training split only, so nothing leaks from validation and test.
    TrainOnly,
}

impl std::str::FromStr for StatsScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "all" | "all_images" => Ok(StatsScope::AllImages),
            "train" | "train_only" => Ok(StatsScope::TrainOnly),
            other => Err(Error::Invalid(format!("unknown stats scope {other:?}"))),
        }
    }
}

impl NormStats {
    pub fn identity(bands: usize) -> Self {
        NormStats {
            mean: vec![0.0; bands],
            std: vec![1.0; bands],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() || self.mean.is_empty() {
            return Err(Error::Invalid(format!(
                "norm stats have {} means and {} stds",
                self.mean.len(),
                self.std.len()
            )));
        }
        if let Some(b) = self.std.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::ZeroVariance { band: band_name(b) });
        }
        Ok(())
    }
}

fn band_name(b: usize) -> String {
    PATCH_BANDS.get(b).map(|s| s.to_string()).unwrap_or_else(|| format!("band {b}"))
}

/// Streaming per-band moments: each patch is reduced with a two-pass mean and
/// sum of squared deviations, and patches are merged with the pairwise update
/// of Chan et al.
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    patches: usize,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pixels: &Array3<f32>) -> Result<()> {
        let bands = pixels.len_of(Axis(0));
        if self.patches == 0 {
            self.mean = vec![0.0; bands];
            self.m2 = vec![0.0; bands];
        } else if bands != self.mean.len() {
            return Err(Error::Shape(format!("patch has {bands} bands, expected {}", self.mean.len())));
        }
        let n = (pixels.len() / bands.max(1)) as f64;
        if n == 0.0 {
            return Ok(());
        }
        for (b, band) in pixels.axis_iter(Axis(0)).enumerate() {
            let mean = band.iter().map(|&v| v as f64).sum::<f64>() / n;
            let m2: f64 = band.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
            let total = self.count + n;
            let delta = mean - self.mean[b];
            self.mean[b] += delta * n / total;
            self.m2[b] += m2 + delta * delta * self.count * n / total;
        }
        self.count += n;
        self.patches += 1;
        Ok(())
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    /// Population statistics; fails on fewer than two patches or a band with
    /// zero variance.
    pub fn finish(&self) -> Result<NormStats> {
        if self.patches < 2 {
            return Err(Error::Invalid(format!(
                "normalization statistics need at least 2 patches, got {}",
                self.patches
            )));
        }
        let std: Vec<f64> = self.m2.iter().map(|m| (m / self.count).sqrt()).collect();
        for (b, (s, m)) in std.iter().zip(&self.mean).enumerate() {
            if *s <= 1e-12 * m.abs().max(1.0) {
                return Err(Error::ZeroVariance { band: band_name(b) });
            }
        }
        Ok(NormStats {
            mean: self.mean.clone(),
            std,
        })
    }
}

pub fn compute_norm_stats<'a>(patches: impl IntoIterator<Item = &'a Array3<f32>>) -> Result<NormStats> {
    let mut acc = StatsAccumulator::new();
    for p in patches {
        acc.push(p)?;
    }
    acc.finish()
}

/// `(x - mean) / std` per band.
pub fn normalize(pixels: &Array3<f32>, stats: &NormStats) -> Result<Array3<f32>> {
    stats.validate()?;
    check_bands(pixels, stats)?;
    let mut out = pixels.clone();
    for (b, mut band) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (m, s) = (stats.mean[b], stats.std[b]);
        band.mapv_inplace(|v| ((v as f64 - m) / s) as f32);
    }
    Ok(out)
}

/// Inverse of [`normalize`].
pub fn denormalize(values: &Array3<f32>, stats: &NormStats) -> Result<Array3<f32>> {
    stats.validate()?;
    check_bands(values, stats)?;
    let mut out = values.clone();
    for (b, mut band) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (m, s) = (stats.mean[b], stats.std[b]);
        band.mapv_inplace(|v| (v as f64 * s + m) as f32);
    }
    Ok(out)
}

/// Normalizes into a flat CHW buffer, as fed to the network.
pub fn normalize_into(pixels: &Array3<f32>, stats: &NormStats, out: &mut [f32]) {
    let plane = pixels.len() / pixels.len_of(Axis(0)).max(1);
    for ((b, band), chunk) in pixels.axis_iter(Axis(0)).enumerate().zip(out.chunks_mut(plane)) {
        let (m, s) = (stats.mean[b], stats.std[b]);
        for (o, &v) in chunk.iter_mut().zip(band.iter()) {
            *o = ((v as f64 - m) / s) as f32;
        }
    }
}

fn check_bands(pixels: &Array3<f32>, stats: &NormStats) -> Result<()> {
    if pixels.len_of(Axis(0)) != stats.mean.len() {
        return Err(Error::Shape(format!(
            "patch has {} bands, stats have {}",
            pixels.len_of(Axis(0)),
            stats.mean.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f32) -> Array3<f32> {
        Array3::from_elem((10, 4, 4), v)
    }

    #[test]
    fn two_point() {
        let mut a = constant(1.0);
        a.index_axis_mut(Axis(0), 1).fill(5.0);
        let mut b = constant(3.0);
        b.index_axis_mut(Axis(0), 1).fill(7.0);
        let s = compute_norm_stats([&a, &b]).unwrap();
        assert!((s.mean[0] - 2.0).abs() < 1e-12);
        assert!((s.std[0] - 1.0).abs() < 1e-12);
        assert!((s.mean[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_named() {
        let mut a = constant(1.0);
        a.index_axis_mut(Axis(0), 0).fill(2.0);
        let mut b = constant(1.0);
        b.index_axis_mut(Axis(0), 0).fill(3.0);
        let err = compute_norm_stats([&a, &b]).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { ref band } if band == "B03"), "{err}");
        assert!(compute_norm_stats([&a]).is_err());
    }

    #[test]
    fn normalize_roundtrip() {
        let x = Array3::from_shape_fn((10, 3, 3), |(b, r, c)| (b * 9 + r * 3 + c) as f32 * 0.01);
        let stats = NormStats {
            mean: (0..10).map(|b| b as f64 * 0.1).collect(),
            std: (0..10).map(|b| 0.5 + b as f64 * 0.01).collect(),
        };
        let y = normalize(&x, &stats).unwrap();
        let z = denormalize(&y, &stats).unwrap();
        assert!(x.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-6));
        let mut flat = vec![0.0; 90];
        normalize_into(&x, &stats, &mut flat);
        assert_eq!(flat, y.iter().copied().collect::<Vec<_>>());
    }
}
