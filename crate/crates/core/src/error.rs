use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("catalog row {row}: {field}: {message}")]
    CatalogRow {
        row: usize,
        field: String,
        message: String,
    },

    #[error("catalog has {} invalid row(s); first: {}", .0.len(), .0[0])]
    Catalog(Vec<String>),

    #[error("unknown {kind} class {value:?}")]
    UnknownClass { kind: &'static str, value: String },

    #[error("raster {raster}: missing required band {band}")]
    MissingBand { raster: String, band: String },

    #[error("unsupported native resolution {0} m/pixel (expected 10 or 20)")]
    UnsupportedResolution(f64),

    #[error("crop center ({lat:.6}, {lon:.6}) lies outside raster {raster}")]
    CenterOutside { raster: String, lat: f64, lon: f64 },

    #[error("crop window at ({row}, {col}) exceeds raster {raster} bounds {rows}x{cols}")]
    WindowOutOfBounds {
        raster: String,
        row: i64,
        col: i64,
        rows: usize,
        cols: usize,
    },

    #[error("band {band} has {fraction:.4} no-data pixels inside the crop window")]
    NoData { band: String, fraction: f64 },

    #[error("could only place {placed} of {requested} background windows after {attempts} attempts")]
    BackgroundPlacement {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("raster provider error: {0}")]
    Provider(String),

    #[error("invalid geotransform: {0}")]
    Geotransform(String),

    #[error("unsupported CRS {0:?}")]
    Crs(String),

    #[error("patch container {path}: {message}")]
    PatchFormat { path: PathBuf, message: String },

    #[error("class {class} has no patches in the {split} split")]
    EmptyClass { class: String, split: String },

    #[error("zero variance in band {band}; refusing to emit std = 0")]
    ZeroVariance { band: String },

    #[error("invalid augmentation transform id {0} (expected 0..=7)")]
    InvalidTransform(u8),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr = {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code under the CLI convention: 2 usage/input, 3 external
    /// service, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Provider(_) => 3,
            Error::NonFiniteLoss { .. } => 4,
            _ => 2,
        }
    }
}
