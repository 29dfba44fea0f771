//! Raster discovery: where rasters come from and which ones to use per site.

use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use super::catalog::SiteRecord;
use super::raster::{read_band_tiff_bytes, RasterMeta, RasterSource};
use crate::error::{Error, Result};

/// Default metadata cloud-cover ceiling.
pub const DEFAULT_MAX_CLOUD: f64 = 0.10;
pub const DEFAULT_RASTERS_PER_SITE: usize = 10;

/// Environment variable naming the HTTP catalog endpoint.
pub const PROVIDER_URL_ENV: &str = "PLANTSCOPE_PROVIDER_URL";

/// A source of rasters covering a location. Implementations must be safe for
/// concurrent queries.
pub trait RasterProvider: Send + Sync {
    /// Metadata of every raster covering (lat, lon) acquired within
    /// `[start, end]`.
    fn query(&self, lat: f64, lon: f64, start: NaiveDate, end: NaiveDate) -> Result<Vec<RasterMeta>>;

    /// Loads the bands of a raster returned by [`RasterProvider::query`].
    fn load(&self, meta: &RasterMeta) -> Result<RasterSource>;
}

/// Rasters stored as subdirectories of `root`, each holding `metadata.json`
/// and its band TIFFs. The index is built once; queries are read-only.
#[derive(Debug, Clone)]
pub struct LocalProvider {
    root: PathBuf,
    entries: Vec<(PathBuf, RasterMeta)>,
}

impl LocalProvider {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let read = std::fs::read_dir(&root).map_err(|e| Error::Provider(format!("{}: {e}", root.display())))?;
        let mut dirs: Vec<PathBuf> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("metadata.json").is_file())
            .collect();
        dirs.sort();
        let mut entries = Vec::with_capacity(dirs.len());
        for dir in dirs {
            let mut meta = RasterMeta::read(dir.join("metadata.json"))?;
            if meta.size.is_none() {
                meta.size = Some(probe_size(&dir, &meta)?);
            }
            entries.push((dir, meta));
        }
        Ok(LocalProvider { root, entries })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn dir_of(&self, meta: &RasterMeta) -> Option<&Path> {
        self.entries
            .iter()
            .find(|(_, m)| m.raster_id == meta.raster_id)
            .map(|(d, _)| d.as_path())
    }
}

/// Reference-grid size read from the header of a 10 m band.
fn probe_size(dir: &Path, meta: &RasterMeta) -> Result<(usize, usize)> {
    let (name, file) = meta
        .bands
        .iter()
        .find(|(b, _)| super::raster::native_resolution(b) == Some(10.0))
        .ok_or_else(|| Error::Invalid(format!("raster {} has no 10 m band", meta.raster_id)))?;
    let path = dir.join(file);
    let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut dec = tiff::decoder::Decoder::new(std::io::BufReader::new(f))
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    let (w, h) = dec
        .dimensions()
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    log::debug!("probed {name} of {}: {w}x{h}", meta.raster_id);
    Ok((h as usize, w as usize))
}

fn covers(meta: &RasterMeta, lat: f64, lon: f64) -> bool {
    let Some((rows, cols)) = meta.size else {
        return false;
    };
    let (x, y) = meta.crs.project(lat, lon);
    let (c, r) = meta.geotransform.world_to_pixel(x, y);
    (0.0..cols as f64).contains(&c) && (0.0..rows as f64).contains(&r)
}

impl RasterProvider for LocalProvider {
    fn query(&self, lat: f64, lon: f64, start: NaiveDate, end: NaiveDate) -> Result<Vec<RasterMeta>> {
        Ok(self
            .entries
            .iter()
            .map(|(_, m)| m)
            .filter(|m| (start..=end).contains(&m.acquisition_date) && covers(m, lat, lon))
            .cloned()
            .collect())
    }

    fn load(&self, meta: &RasterMeta) -> Result<RasterSource> {
        let dir = self
            .dir_of(meta)
            .ok_or_else(|| Error::Provider(format!("unknown raster {}", meta.raster_id)))?;
        RasterSource::load_dir(dir)
    }
}

/// Client for an HTTP raster catalog.
///
/// `GET {base}/search?lat=..&lon=..&start=YYYY-MM-DD&end=YYYY-MM-DD` returns a
/// JSON array of raster sidecars (including `raster_id`); band entries are
/// URLs, absolute or relative to `base`, serving single-band TIFFs.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    base: String,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(base: impl Into<String>) -> Self {
        HttpProvider {
            base: base.into().trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    /// Endpoint from [`PROVIDER_URL_ENV`].
    pub fn from_env() -> Result<Self> {
        std::env::var(PROVIDER_URL_ENV)
            .map(Self::new)
            .map_err(|_| Error::Provider(format!("{PROVIDER_URL_ENV} is not set")))
    }

    pub fn search_url(&self, lat: f64, lon: f64, start: NaiveDate, end: NaiveDate) -> String {
        format!(
            "{}/search?lat={lat}&lon={lon}&start={start}&end={end}",
            self.base
        )
    }

    pub fn band_url(&self, entry: &str) -> String {
        if entry.starts_with("http://") || entry.starts_with("https://") {
            entry.to_string()
        } else {
            format!("{}/{}", self.base, entry.trim_start_matches('/'))
        }
    }
}

impl RasterProvider for HttpProvider {
    fn query(&self, lat: f64, lon: f64, start: NaiveDate, end: NaiveDate) -> Result<Vec<RasterMeta>> {
        let url = self.search_url(lat, lon, start, end);
        let mut resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| Error::Provider(format!("{url}: {e}")))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Provider(format!("{url}: {e}")))?;
        let metas: Vec<RasterMeta> =
            serde_json::from_str(&text).map_err(|e| Error::Provider(format!("{url}: {e}")))?;
        for m in &metas {
            m.check()?;
        }
        Ok(metas)
    }

    fn load(&self, meta: &RasterMeta) -> Result<RasterSource> {
        RasterSource::from_meta(meta, |entry| {
            let url = self.band_url(entry);
            let resp = self
                .agent
                .get(&url)
                .call()
                .map_err(|e| Error::Provider(format!("{url}: {e}")))?;
            let mut bytes = Vec::new();
            resp.into_body()
                .into_reader()
                .read_to_end(&mut bytes)
                .map_err(|e| Error::Provider(format!("{url}: {e}")))?;
            read_band_tiff_bytes(bytes, &url)
        })
    }
}

/// Chooses up to `n` dates maximizing the smallest gap between consecutive
/// picks. The largest feasible gap is found by binary search over a greedy
/// earliest-first placement; returns indices into `dates` in date order.
pub fn spread_dates(dates: &[NaiveDate], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dates.len()).collect();
    order.sort_by_key(|&i| (dates[i], i));
    if order.len() <= n {
        return order;
    }
    if n == 0 {
        return Vec::new();
    }
    let greedy = |gap: i64| -> Vec<usize> {
        let mut picked = vec![order[0]];
        for &i in &order[1..] {
            if (dates[i] - dates[*picked.last().unwrap()]).num_days() >= gap {
                picked.push(i);
            }
        }
        picked
    };
    let span = (dates[*order.last().unwrap()] - dates[order[0]]).num_days();
    let (mut lo, mut hi) = (0i64, span + 1);
    // Invariant: greedy(lo) yields >= n picks, greedy(hi) does not.
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if greedy(mid).len() >= n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut picked = greedy(lo);
    picked.truncate(n);
    picked
}

/// Outcome of [`fetch_rasters`].
#[derive(Debug)]
pub struct FetchResult {
    pub rasters: Vec<RasterSource>,
    /// Fewer than the requested number of rasters passed the filters.
    pub shortfall: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct FetchOptions {
    pub year: i32,
    pub max_cloud: f64,
    pub n: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            year: 2020,
            max_cloud: DEFAULT_MAX_CLOUD,
            n: DEFAULT_RASTERS_PER_SITE,
        }
    }
}

/// Candidate rasters for a site after cloud screening and date spreading,
/// without loading pixels.
pub fn select_rasters(
    site: &SiteRecord,
    opts: FetchOptions,
    provider: &dyn RasterProvider,
) -> Result<(Vec<RasterMeta>, bool)> {
    let start = NaiveDate::from_ymd_opt(opts.year, 1, 1).expect("valid year");
    let end = NaiveDate::from_ymd_opt(opts.year, 12, 31).expect("valid year");
    let candidates: Vec<RasterMeta> = provider
        .query(site.latitude, site.longitude, start, end)?
        .into_iter()
        .filter(|m| m.cloud_cover <= opts.max_cloud)
        .collect();
    let dates: Vec<NaiveDate> = candidates.iter().map(|m| m.acquisition_date).collect();
    let picked = spread_dates(&dates, opts.n);
    let shortfall = picked.len() < opts.n;
    if shortfall {
        log::warn!(
            "site {}: only {} of {} rasters with cloud cover <= {}",
            site.site_id,
            picked.len(),
            opts.n,
            opts.max_cloud
        );
    }
    Ok((picked.into_iter().map(|i| candidates[i].clone()).collect(), shortfall))
}

/// Up to `opts.n` cloud-screened rasters of one year covering the site,
/// spread across the year.
pub fn fetch_rasters(
    site: &SiteRecord,
    opts: FetchOptions,
    provider: &dyn RasterProvider,
) -> Result<FetchResult> {
    let (metas, shortfall) = select_rasters(site, opts, provider)?;
    let rasters = metas
        .iter()
        .map(|m| provider.load(m))
        .collect::<Result<Vec<_>>>()?;
    Ok(FetchResult { rasters, shortfall })
}
