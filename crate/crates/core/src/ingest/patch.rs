use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::classes::CoolingClass;
use crate::error::{Error, Result};
use crate::geo::{Crs, GeoTransform};

pub const PATCH_CHANNELS: usize = 10;
pub const PATCH_SIZE: usize = 100;
pub const PATCH_PIXEL_SIZE: f64 = 10.0;
pub const BACKGROUND_SITE: &str = "background";

const MAGIC: &[u8; 8] = b"PLNTPATC";
pub const PATCH_EXTENSION: &str = "patch";

/// Provenance of a patch; serialized as the JSON sidecar next to the container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMeta {
    pub site_id: String,
    /// Plant-task label index (see `LabelMap::plant`).
    pub label: usize,
    pub raster_id: String,
    pub date: NaiveDate,
    /// (lat, lon) of the patch center pixel corner.
    pub center: (f64, f64),
    pub pixel_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cooling_class: Option<CoolingClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crs: Option<Crs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geotransform: Option<GeoTransform>,
}

impl PatchMeta {
    pub fn is_background(&self) -> bool {
        self.site_id == BACKGROUND_SITE
    }
}

/// A 10-band, channel-first reflectance image.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Array3<f32>,
    pub meta: PatchMeta,
}

impl Patch {
    pub fn new(pixels: Array3<f32>, meta: PatchMeta) -> Result<Self> {
        let patch = Patch { pixels, meta };
        patch.validate()?;
        Ok(patch)
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.pixels.dim();
        if c != PATCH_CHANNELS || h != PATCH_SIZE || w != PATCH_SIZE {
            return Err(Error::Shape(format!(
                "patch must be {PATCH_CHANNELS}x{PATCH_SIZE}x{PATCH_SIZE}, got {c}x{h}x{w}"
            )));
        }
        if let Some(v) = self.pixels.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NonFinite(format!(
                "patch {} has invalid reflectance {v}",
                self.meta.site_id
            )));
        }
        Ok(())
    }

    /// Writes `<stem>.patch` and `<stem>.json` into `dir`; returns the container path.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let path = dir.join(format!("{stem}.{PATCH_EXTENSION}"));
        write_container(&path, &self.pixels)?;
        let sidecar = path.with_extension("json");
        let json =
            serde_json::to_string_pretty(&self.meta).map_err(|e| Error::json("patch sidecar", e))?;
        fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let pixels = read_container(path)?;
        let meta = read_sidecar(path)?;
        Ok(Patch { pixels, meta })
    }
}

pub fn read_sidecar(container: &Path) -> Result<PatchMeta> {
    let sidecar = container.with_extension("json");
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(sidecar.display().to_string(), e))
}

/// Serializes a channel-first array: magic, three little-endian u32 dims,
/// then row-major f32 data channel by channel.
pub fn encode_container(pixels: &Array3<f32>) -> Vec<u8> {
    let (c, h, w) = pixels.dim();
    let mut buf = Vec::with_capacity(20 + 4 * pixels.len());
    buf.extend_from_slice(MAGIC);
    for d in [c, h, w] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in pixels.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_container(bytes: &[u8], path: &Path) -> Result<Array3<f32>> {
    let bad = |message: String| Error::PatchFormat {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing PLNTPATC magic".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let expected = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("dimension overflow".into()))?;
    let body = &bytes[20..];
    if body.len() != expected {
        return Err(bad(format!(
            "expected {expected} data bytes for {c}x{h}x{w}, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Array3::from_shape_vec((c, h, w), data).map_err(|e| bad(e.to_string()))
}

pub fn write_container(path: &Path, pixels: &Array3<f32>) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_container(pixels))
        .map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Array3<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> PatchMeta {
        PatchMeta {
            site_id: "X1".into(),
            label: 0,
            raster_id: "R1".into(),
            date: NaiveDate::from_ymd_opt(2020, 6, 1).unwrap(),
            center: (51.84, 14.46),
            pixel_size: 10.0,
            cooling_class: Some(CoolingClass::NaturalDraftTower),
            crs: None,
            geotransform: None,
        }
    }

    #[test]
    fn header_layout() {
        let px = Array3::<f32>::from_elem((2, 3, 4), 1.5);
        let bytes = encode_container(&px);
        assert_eq!(&bytes[..8], b"PLNTPATC");
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &4u32.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 24 * 4);
        assert_eq!(&bytes[20..24], &1.5f32.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let px = Array3::<f32>::zeros((1, 2, 2));
        let mut bytes = encode_container(&px);
        bytes.pop();
        assert!(decode_container(&bytes, Path::new("x")).is_err());
        bytes[0] = b'Q';
        assert!(decode_container(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let px = Array3::from_shape_fn((10, 100, 100), |(c, r, k)| (c + r + k) as f32 * 1e-3);
        let patch = Patch::new(px, meta()).unwrap();
        let path = patch.save(dir.path(), "X1_R1").unwrap();
        assert!(path.with_extension("json").exists());
        assert_eq!(Patch::load(&path).unwrap(), patch);
    }

    #[test]
    fn validates_shape_and_values() {
        assert!(Patch::new(Array3::zeros((9, 100, 100)), meta()).is_err());
        let mut px = Array3::<f32>::zeros((10, 100, 100));
        px[[0, 0, 0]] = -0.1;
        assert!(Patch::new(px, meta()).is_err());
    }

    proptest! {
        #[test]
        fn container_round_trip(c in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u32>()) {
            let px = Array3::from_shape_fn((c, h, w), |(a, b, d)| {
                ((a * 31 + b * 7 + d) as f32 + seed as f32).sin()
            });
            let back = decode_container(&encode_container(&px), Path::new("x")).unwrap();
            prop_assert_eq!(back, px);
        }
    }
}
