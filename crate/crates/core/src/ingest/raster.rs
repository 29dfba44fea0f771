use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Seek};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Crs, GeoTransform};

/// Sentinel-2 MSI bands used for patches, in channel order.
pub const PATCH_BANDS: [&str; 10] = [
    "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B11", "B12",
];

/// Atmospheric bands, never included in patches.
pub const ATMOSPHERIC_BANDS: [&str; 3] = ["B01", "B09", "B10"];

/// Native ground sampling distance of each MSI band in m/pixel.
pub fn native_resolution(band: &str) -> Option<f64> {
    match band {
        "B02" | "B03" | "B04" | "B08" => Some(10.0),
        "B05" | "B06" | "B07" | "B8A" | "B11" | "B12" => Some(20.0),
        "B01" | "B09" | "B10" => Some(60.0),
        _ => None,
    }
}

/// Digital numbers are divided by this to obtain surface reflectance.
pub const REFLECTANCE_SCALE: f64 = 10_000.0;

/// One band of a raster at its native resolution, in reflectance units.
#[derive(Debug, Clone, PartialEq)]
pub struct BandGrid {
    pub data: Array2<f32>,
    /// m/pixel
    pub resolution: f64,
}

/// Metadata sidecar (`metadata.json`) describing one raster on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    #[serde(default)]
    pub raster_id: String,
    pub acquisition_date: NaiveDate,
    pub cloud_cover: f64,
    pub crs: Crs,
    /// Transform of the 10 m reference grid.
    pub geotransform: GeoTransform,
    /// Band name to file name (relative to the sidecar) or URL.
    pub bands: BTreeMap<String, String>,
    /// Size of the 10 m reference grid as (rows, cols), when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<(usize, usize)>,
    /// Digital number marking missing data.
    #[serde(default = "default_nodata", skip_serializing_if = "Option::is_none")]
    pub nodata: Option<f64>,
}

fn default_nodata() -> Option<f64> {
    Some(0.0)
}

impl RasterMeta {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut meta: RasterMeta =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if meta.raster_id.is_empty() {
            meta.raster_id = path
                .parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        meta.check()?;
        Ok(meta)
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cloud_cover) {
            return Err(Error::Invalid(format!(
                "raster {}: cloud_cover {} outside [0, 1]",
                self.raster_id, self.cloud_cover
            )));
        }
        for band in self.bands.keys() {
            if native_resolution(band).is_none() {
                return Err(Error::Invalid(format!(
                    "raster {}: unknown band name {band}",
                    self.raster_id
                )));
            }
        }
        Ok(())
    }
}

/// Placement of a reference grid on the Earth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub geotransform: GeoTransform,
    pub crs: Crs,
    pub rows: usize,
    pub cols: usize,
}

impl GridGeometry {
    pub fn latlon_to_pixel(&self, lat: f64, lon: f64) -> (f64, f64) {
        let (x, y) = self.crs.project(lat, lon);
        self.geotransform.world_to_pixel(x, y)
    }

    pub fn pixel_to_latlon(&self, col: f64, row: f64) -> (f64, f64) {
        let (x, y) = self.geotransform.pixel_to_world(col, row);
        self.crs.unproject(x, y)
    }

    pub fn contains_pixel(&self, col: f64, row: f64) -> bool {
        (0.0..self.cols as f64).contains(&col) && (0.0..self.rows as f64).contains(&row)
    }
}

/// A multispectral raster with all of its bands loaded.
#[derive(Debug, Clone)]
pub struct RasterSource {
    pub raster_id: String,
    pub acquisition_date: NaiveDate,
    pub bands: BTreeMap<String, BandGrid>,
    /// Transform of the 10 m reference grid.
    pub geotransform: GeoTransform,
    pub crs: Crs,
    pub cloud_cover: f64,
    /// Reflectance value marking missing data.
    pub nodata: Option<f32>,
}

impl RasterSource {
    /// Size of the reference grid as (rows, cols), derived from the bands.
    pub fn grid_size(&self) -> (usize, usize) {
        let ref_res = self.reference_resolution();
        self.bands
            .values()
            .map(|b| {
                let s = (b.resolution / ref_res).round() as usize;
                (b.data.nrows() * s, b.data.ncols() * s)
            })
            .fold((0, 0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    }

    pub fn geometry(&self) -> GridGeometry {
        let (rows, cols) = self.grid_size();
        GridGeometry {
            geotransform: self.geotransform,
            crs: self.crs,
            rows,
            cols,
        }
    }

    pub fn reference_resolution(&self) -> f64 {
        self.geotransform.pixel_width()
    }

    /// (lat, lon) → continuous reference-grid pixel (col, row).
    pub fn latlon_to_pixel(&self, lat: f64, lon: f64) -> (f64, f64) {
        let (x, y) = self.crs.project(lat, lon);
        self.geotransform.world_to_pixel(x, y)
    }

    pub fn pixel_to_latlon(&self, col: f64, row: f64) -> (f64, f64) {
        let (x, y) = self.geotransform.pixel_to_world(col, row);
        self.crs.unproject(x, y)
    }

    /// Reads a raster directory holding `metadata.json` and one TIFF per band.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta = RasterMeta::read(dir.join("metadata.json"))?;
        Self::from_meta(&meta, |file| {
            let path = dir.join(file);
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            read_band_tiff(BufReader::new(f), &path)
        })
    }

    /// Builds a raster from its sidecar, fetching each band with `read_band`
    /// (which returns digital numbers).
    pub fn from_meta(
        meta: &RasterMeta,
        mut read_band: impl FnMut(&str) -> Result<Array2<f32>>,
    ) -> Result<Self> {
        meta.check()?;
        let mut bands = BTreeMap::new();
        for (name, file) in &meta.bands {
            let dn = read_band(file)?;
            let data = dn.mapv(|v| (v as f64 / REFLECTANCE_SCALE) as f32);
            let resolution = native_resolution(name).expect("checked band name");
            bands.insert(name.clone(), BandGrid { data, resolution });
        }
        Ok(RasterSource {
            raster_id: meta.raster_id.clone(),
            acquisition_date: meta.acquisition_date,
            bands,
            geotransform: meta.geotransform,
            crs: meta.crs,
            cloud_cover: meta.cloud_cover,
            nodata: meta.nodata.map(|v| (v / REFLECTANCE_SCALE) as f32),
        })
    }

    /// Writes the raster as a directory of 16-bit TIFF bands plus sidecar.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = BTreeMap::new();
        for (name, band) in &self.bands {
            let file = format!("{name}.tif");
            write_band_tiff(&dir.join(&file), &band.data)?;
            files.insert(name.clone(), file);
        }
        let meta = RasterMeta {
            raster_id: self.raster_id.clone(),
            acquisition_date: self.acquisition_date,
            cloud_cover: self.cloud_cover,
            crs: self.crs,
            geotransform: self.geotransform,
            bands: files,
            size: Some(self.grid_size()),
            nodata: self.nodata.map(|v| (v as f64 * REFLECTANCE_SCALE).round()),
        };
        let path = dir.join("metadata.json");
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json("raster sidecar", e))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Returns the ten patch bands in channel order. Atmospheric bands are
/// never part of the result.
pub fn select_bands(raster: &RasterSource) -> Result<[&BandGrid; 10]> {
    let mut out = Vec::with_capacity(PATCH_BANDS.len());
    for name in PATCH_BANDS {
        let band = raster.bands.get(name).ok_or_else(|| Error::MissingBand {
            raster: raster.raster_id.clone(),
            band: name.to_string(),
        })?;
        out.push(band);
    }
    Ok(out.try_into().expect("ten bands"))
}

pub(crate) fn read_band_tiff<R: Read + Seek>(reader: R, path: &Path) -> Result<Array2<f32>> {
    use tiff::decoder::{Decoder, DecodingResult};
    let err = |e: tiff::TiffError| Error::io(path, std::io::Error::other(e));
    let mut dec = Decoder::new(reader).map_err(err)?;
    let (w, h) = dec.dimensions().map_err(err)?;
    let values: Vec<f32> = match dec.read_image().map_err(err)? {
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        _ => {
            return Err(Error::io(
                path,
                std::io::Error::other("unsupported TIFF sample format"),
            ))
        }
    };
    Array2::from_shape_vec((h as usize, w as usize), values)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

pub(crate) fn read_band_tiff_bytes(bytes: Vec<u8>, origin: &str) -> Result<Array2<f32>> {
    read_band_tiff(Cursor::new(bytes), Path::new(origin))
}

/// Writes reflectance as 16-bit digital numbers.
pub fn write_band_tiff(path: &Path, reflectance: &Array2<f32>) -> Result<()> {
    use tiff::encoder::{colortype::Gray16, TiffEncoder};
    let err = |e: tiff::TiffError| Error::io(path, std::io::Error::other(e));
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(f)).map_err(err)?;
    let dn: Vec<u16> = reflectance
        .iter()
        .map(|&v| (v as f64 * REFLECTANCE_SCALE).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    enc.write_image::<Gray16>(reflectance.ncols() as u32, reflectance.nrows() as u32, &dn)
        .map_err(err)
}
