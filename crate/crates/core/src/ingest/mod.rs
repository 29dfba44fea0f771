//! Site catalogs, raster access and patch extraction.

pub mod background;
pub mod catalog;
pub mod crop;
pub mod fixtures;
pub mod patch;
pub mod provider;
pub mod raster;
pub mod resample;

pub use background::{sample_background, sample_windows, EXCLUSION_RADIUS_M};
pub use catalog::{cooling_sites, load_catalog, SiteRecord};
pub use crop::{crop_patch, locate_window, Window};
pub use patch::{Patch, PatchMeta, BACKGROUND_SITE, PATCH_CHANNELS, PATCH_SIZE};
pub use provider::{
    fetch_rasters, spread_dates, FetchOptions, FetchResult, HttpProvider, LocalProvider,
    RasterProvider,
};
pub use raster::{select_bands, BandGrid, GridGeometry, RasterMeta, RasterSource, PATCH_BANDS};
pub use resample::upsample_band;
