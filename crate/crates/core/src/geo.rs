//! Georeferencing: UTM projection, affine geotransforms and great-circle distance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const UTM_K0: f64 = 0.9996;
const UTM_FALSE_EASTING: f64 = 500_000.0;
const UTM_FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;
const MEAN_EARTH_RADIUS: f64 = 6_371_008.8;

/// Coordinate reference system of a raster grid. Sentinel-2 tiles are
/// delivered in WGS84 / UTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crs {
    Utm { zone: u8, north: bool },
}

impl Crs {
    pub fn epsg(&self) -> u32 {
        match *self {
            Crs::Utm { zone, north: true } => 32600 + zone as u32,
            Crs::Utm { zone, north: false } => 32700 + zone as u32,
        }
    }

    /// UTM zone containing a point (no Norway/Svalbard exceptions).
    pub fn utm_for(lat: f64, lon: f64) -> Self {
        let zone = (((lon + 180.0) / 6.0).floor() as i64).clamp(0, 59) as u8 + 1;
        Crs::Utm {
            zone,
            north: lat >= 0.0,
        }
    }

    /// (lat, lon) degrees → projected (x, y) meters.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        match *self {
            Crs::Utm { zone, north } => utm_forward(lat, lon, zone, north),
        }
    }

    /// Projected (x, y) meters → (lat, lon) degrees.
    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            Crs::Utm { zone, north } => utm_inverse(x, y, zone, north),
        }
    }
}

impl fmt::Display for Crs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EPSG:{}", self.epsg())
    }
}

impl FromStr for Crs {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let code = s
            .trim()
            .strip_prefix("EPSG:")
            .or_else(|| s.trim().strip_prefix("epsg:"))
            .and_then(|c| c.parse::<u32>().ok())
            .ok_or_else(|| Error::Crs(s.to_string()))?;
        match code {
            32601..=32660 => Ok(Crs::Utm {
                zone: (code - 32600) as u8,
                north: true,
            }),
            32701..=32760 => Ok(Crs::Utm {
                zone: (code - 32700) as u8,
                north: false,
            }),
            _ => Err(Error::Crs(s.to_string())),
        }
    }
}

impl Serialize for Crs {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Crs {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

struct KruegerSeries {
    scale: f64,
    alpha: [f64; 3],
    beta: [f64; 3],
    delta: [f64; 3],
    n: f64,
}

fn krueger() -> KruegerSeries {
    let n = WGS84_F / (2.0 - WGS84_F);
    let n2 = n * n;
    let n3 = n2 * n;
    KruegerSeries {
        scale: WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n2 * n2 / 64.0),
        alpha: [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0,
            61.0 * n3 / 240.0,
        ],
        beta: [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0,
            n2 / 48.0 + n3 / 15.0,
            17.0 * n3 / 480.0,
        ],
        delta: [
            2.0 * n - 2.0 * n2 / 3.0 - 2.0 * n3,
            7.0 * n2 / 3.0 - 8.0 * n3 / 5.0,
            56.0 * n3 / 15.0,
        ],
        n,
    }
}

fn central_meridian(zone: u8) -> f64 {
    (zone as f64 * 6.0 - 183.0).to_radians()
}

fn utm_forward(lat: f64, lon: f64, zone: u8, north: bool) -> (f64, f64) {
    let k = krueger();
    let phi = lat.to_radians();
    let dlam = lon.to_radians() - central_meridian(zone);
    let c = 2.0 * k.n.sqrt() / (1.0 + k.n);
    let t = (phi.sin().atanh() - c * (c * phi.sin()).atanh()).sinh();
    let xi = (t / dlam.cos()).atan();
    let eta = (dlam.sin() / (1.0 + t * t).sqrt()).atanh();
    let mut e = eta;
    let mut nn = xi;
    for (j, a) in k.alpha.iter().enumerate() {
        let m = 2.0 * (j + 1) as f64;
        e += a * (m * xi).cos() * (m * eta).sinh();
        nn += a * (m * xi).sin() * (m * eta).cosh();
    }
    let x = UTM_FALSE_EASTING + UTM_K0 * k.scale * e;
    let y = UTM_K0 * k.scale * nn + if north { 0.0 } else { UTM_FALSE_NORTHING_SOUTH };
    (x, y)
}

fn utm_inverse(x: f64, y: f64, zone: u8, north: bool) -> (f64, f64) {
    let k = krueger();
    let y0 = if north { 0.0 } else { UTM_FALSE_NORTHING_SOUTH };
    let xi = (y - y0) / (UTM_K0 * k.scale);
    let eta = (x - UTM_FALSE_EASTING) / (UTM_K0 * k.scale);
    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in k.beta.iter().enumerate() {
        let m = 2.0 * (j + 1) as f64;
        xi_p -= b * (m * xi).sin() * (m * eta).cosh();
        eta_p -= b * (m * xi).cos() * (m * eta).sinh();
    }
    let chi = (xi_p.sin() / eta_p.cosh()).asin();
    let mut phi = chi;
    for (j, d) in k.delta.iter().enumerate() {
        phi += d * (2.0 * (j + 1) as f64 * chi).sin();
    }
    let lam = central_meridian(zone) + (eta_p.sinh() / xi_p.cos()).atan();
    (phi.to_degrees(), lam.to_degrees())
}

/// Great-circle distance in meters on the mean-radius sphere.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2)
        + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * MEAN_EARTH_RADIUS * h.sqrt().min(1.0).asin()
}

/// GDAL-ordered affine coefficients `[x0, dx/dcol, dx/drow, y0, dy/dcol, dy/drow]`
/// mapping continuous pixel coordinates (col, row) to projected (x, y).
/// Pixel (0, 0) covers `[0, 1) x [0, 1)`, so its center is at (0.5, 0.5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct GeoTransform([f64; 6]);

impl GeoTransform {
    pub fn new(coeffs: [f64; 6]) -> Result<Self> {
        let gt = GeoTransform(coeffs);
        let det = gt.det();
        if !det.is_finite() || det.abs() < 1e-12 || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Geotransform(format!("singular coefficients {coeffs:?}")));
        }
        Ok(gt)
    }

    /// North-up grid with square pixels.
    pub fn north_up(origin_x: f64, origin_y: f64, pixel_size: f64) -> Self {
        GeoTransform([origin_x, pixel_size, 0.0, origin_y, 0.0, -pixel_size])
    }

    pub fn coeffs(&self) -> [f64; 6] {
        self.0
    }

    fn det(&self) -> f64 {
        self.0[1] * self.0[5] - self.0[2] * self.0[4]
    }

    /// Ground size of one pixel column step, in CRS units.
    pub fn pixel_width(&self) -> f64 {
        self.0[1].hypot(self.0[4])
    }

    pub fn pixel_height(&self) -> f64 {
        self.0[2].hypot(self.0[5])
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        let g = &self.0;
        (g[0] + col * g[1] + row * g[2], g[3] + col * g[4] + row * g[5])
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let g = &self.0;
        let det = self.det();
        let dx = x - g[0];
        let dy = y - g[3];
        ((g[5] * dx - g[2] * dy) / det, (-g[4] * dx + g[1] * dy) / det)
    }

    /// Transform of the sub-grid whose top-left pixel is (col, row) here.
    pub fn window(&self, col: f64, row: f64) -> Self {
        let (x, y) = self.pixel_to_world(col, row);
        GeoTransform([x, self.0[1], self.0[2], y, self.0[4], self.0[5]])
    }

    /// Transform of the same footprint resampled by `factor` (factor 2 halves
    /// the pixel size).
    pub fn scaled(&self, factor: f64) -> Self {
        let g = &self.0;
        GeoTransform([g[0], g[1] / factor, g[2] / factor, g[3], g[4] / factor, g[5] / factor])
    }
}

impl TryFrom<[f64; 6]> for GeoTransform {
    type Error = Error;

    fn try_from(c: [f64; 6]) -> Result<Self> {
        GeoTransform::new(c)
    }
}

impl From<GeoTransform> for [f64; 6] {
    fn from(g: GeoTransform) -> Self {
        g.0
    }
}
