//! The end-to-end commands behind the `plantscope` binary: ingest, build,
//! train, evaluate and cam. Each writes its artifacts plus one
//! `run_manifest.json` into a single output directory.

mod run;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classes::{PlantClass, Task};
use crate::dataset::{normalize, BuildOptions, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, render_confusion, EvaluationReport, DEFAULT_DRAWS};
use crate::explain::{compute_cam, predicted_class, rgb_composite, write_cam_outputs, CamSidecar, DEFAULT_STRETCH};
use crate::ingest::patch::{encode_container, PATCH_EXTENSION};
use crate::ingest::provider::select_rasters;
use crate::ingest::{crop_patch, load_catalog, sample_background, FetchOptions, Patch, RasterProvider, SiteRecord};
use crate::model::{load_checkpoint, ModelParams};
use crate::seed;
use crate::training::{TrainConfig, TrainOutcome, Trainer};

pub use run::{RunManifest, RUN_MANIFEST_FILE};

pub const STORE_INDEX_FILE: &str = "store_index.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_STEM: &str = "confusion";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_json_bytes<T: Serialize>(value: &T, context: &str) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(context, e))?;
    s.push('\n');
    Ok(s.into_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub year: i32,
    pub max_cloud: f64,
    pub n_rasters: usize,
    pub backgrounds_per_raster: usize,
    pub seed: u64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        let f = FetchOptions::default();
        IngestOptions {
            year: f.year,
            max_cloud: f.max_cloud,
            n_rasters: f.n,
            backgrounds_per_raster: 4,
            seed: 0,
        }
    }
}

/// One stored patch in the store index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StoreEntry {
    /// Relative to the store directory.
    pub path: String,
    pub sha256: String,
    pub site_id: String,
    pub raster_id: String,
    pub label: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub sites: usize,
    pub rasters: usize,
    pub site_patches: usize,
    pub background_patches: usize,
    /// Patch files created or replaced by this run.
    pub written: usize,
    /// Existing patch files whose content already matched.
    pub unchanged: usize,
    /// Sites with fewer rasters than requested.
    pub shortfall: Vec<String>,
    /// Crops or background draws that failed, with the reason.
    pub rejected: Vec<String>,
}

enum Outcome {
    Written,
    Unchanged,
}

/// Stores `patch` as `<dir>/<stem>.patch` plus sidecar unless an identical
/// container already exists.
fn store_patch(patch: &Patch, dir: &Path, stem: &str) -> Result<(StoreEntry, Outcome)> {
    patch.validate()?;
    let bytes = encode_container(&patch.pixels);
    let hash = sha256_hex(&bytes);
    let path = dir.join(format!("{stem}.{PATCH_EXTENSION}"));
    let sidecar = path.with_extension("json");
    let meta = to_json_bytes(&patch.meta, "patch sidecar")?;
    let same = |p: &Path, expected: &[u8]| fs::read(p).is_ok_and(|b| b == expected);
    let outcome = if fs::read(&path).is_ok_and(|b| sha256_hex(&b) == hash) && same(&sidecar, &meta) {
        Outcome::Unchanged
    } else {
        write_atomic(&sidecar, &meta)?;
        write_atomic(&path, &bytes)?;
        Outcome::Written
    };
    let entry = StoreEntry {
        path: format!("patches/{stem}.{PATCH_EXTENSION}"),
        sha256: hash,
        site_id: patch.meta.site_id.clone(),
        raster_id: patch.meta.raster_id.clone(),
        label: patch.meta.label,
    };
    Ok((entry, outcome))
}

fn file_stem_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Crops every catalog site from up to `n_rasters` rasters and draws
/// background patches from every raster used, into `<out>/patches`. Reruns
/// leave matching files untouched.
pub fn run_ingest(
    catalog: &Path,
    provider: &dyn RasterProvider,
    out: &Path,
    opts: &IngestOptions,
) -> Result<IngestSummary> {
    let sites = load_catalog(catalog)?;
    let patch_dir = out.join("patches");
    create_dir(&patch_dir)?;
    let fetch = FetchOptions {
        year: opts.year,
        max_cloud: opts.max_cloud,
        n: opts.n_rasters,
    };
    let mut summary = IngestSummary {
        sites: sites.len(),
        ..Default::default()
    };
    // raster id -> (metadata, sites cropped from it)
    let mut by_raster: BTreeMap<String, (crate::ingest::RasterMeta, Vec<&SiteRecord>)> = BTreeMap::new();
    for site in &sites {
        let (metas, shortfall) = select_rasters(site, fetch, provider)?;
        if shortfall {
            summary.shortfall.push(site.site_id.clone());
        }
        for m in metas {
            by_raster.entry(m.raster_id.clone()).or_insert_with(|| (m, Vec::new())).1.push(site);
        }
    }
    summary.rasters = by_raster.len();
    let exclusions: Vec<(f64, f64)> = sites.iter().map(SiteRecord::location).collect();
    let background = PlantClass::ALL.len();
    type Item = Result<(Vec<(StoreEntry, Outcome)>, Vec<String>)>;
    let results: Vec<Item> = by_raster
        .par_iter()
        .map(|(raster_id, (meta, raster_sites))| -> Item {
            let raster = provider.load(meta)?;
            let rid = file_stem_safe(raster_id);
            let mut stored = Vec::new();
            let mut rejected = Vec::new();
            for site in raster_sites {
                match crop_patch(&raster, site.location()) {
                    Ok(mut p) => {
                        p.meta.site_id = site.site_id.clone();
                        p.meta.label = site.plant_class.index();
                        p.meta.cooling_class = site.cooling_class;
                        stored.push(store_patch(&p, &patch_dir, &format!("{}_{rid}", file_stem_safe(&site.site_id)))?);
                    }
                    Err(e) if e.exit_code() == 2 => {
                        log::warn!("site {} on {raster_id}: {e}", site.site_id);
                        rejected.push(format!("{} {raster_id}: {e}", site.site_id));
                    }
                    Err(e) => return Err(e),
                }
            }
            let bg_seed = seed::derive_seed_str(opts.seed, raster_id);
            match sample_background(&raster, opts.backgrounds_per_raster, &exclusions, bg_seed, background) {
                Ok(patches) => {
                    for (k, p) in patches.iter().enumerate() {
                        stored.push(store_patch(p, &patch_dir, &format!("background_{rid}_{k}"))?);
                    }
                }
                Err(e) => {
                    log::warn!("background on {raster_id}: {e}");
                    rejected.push(format!("background {raster_id}: {e}"));
                }
            }
            Ok((stored, rejected))
        })
        .collect();
    let mut index = Vec::new();
    for r in results {
        let (stored, rejected) = r?;
        summary.rejected.extend(rejected);
        for (entry, outcome) in stored {
            match outcome {
                Outcome::Written => summary.written += 1,
                Outcome::Unchanged => summary.unchanged += 1,
            }
            if entry.site_id == crate::ingest::BACKGROUND_SITE {
                summary.background_patches += 1;
            } else {
                summary.site_patches += 1;
            }
            index.push(entry);
        }
    }
    index.sort();
    let index_path = out.join(STORE_INDEX_FILE);
    let bytes = to_json_bytes(&index, "store index")?;
    if fs::read(&index_path).ok().as_deref() != Some(bytes.as_slice()) {
        write_atomic(&index_path, &bytes)?;
    }
    Ok(summary)
}

/// Scans a patch store, splits it and computes normalization statistics;
/// writes `<out>/manifest.json`.
pub fn run_build(store: &Path, out: &Path, task: Task, opts: &BuildOptions) -> Result<(DatasetManifest, PathBuf)> {
    create_dir(out)?;
    let entries = crate::dataset::scan_patch_store(store, task, out)?;
    if entries.is_empty() {
        return Err(Error::Invalid(format!("no {task:?} patches found under {}", store.display())));
    }
    let manifest = DatasetManifest::build(task, &entries, out, None, opts)?;
    let path = out.join(MANIFEST_FILE);
    manifest.save(&path)?;
    Ok((manifest, path))
}

/// Initial parameters for a CLI training run: the pretrained checkpoint (with
/// a new head if the class count differs) or a fresh model.
fn cli_initial_params(config: &TrainConfig, num_classes: usize) -> Result<ModelParams<f32>> {
    if config.pretrained.is_none() && config.task == Task::Cooling {
        log::warn!("training the cooling task without --pretrained; transfer from a plant model is recommended");
    }
    crate::training::initial_params(config, num_classes)
}

/// Trains on `manifest`, writing `best.ckpt` and `train_log.jsonl` to `out`.
pub fn run_train(manifest: &DatasetManifest, config: &TrainConfig, out: &Path) -> Result<TrainOutcome> {
    if manifest.task != config.task {
        return Err(Error::Config(format!(
            "task {:?} does not match the manifest's {:?}",
            config.task, manifest.task
        )));
    }
    let params = cli_initial_params(config, manifest.num_classes())?;
    Trainer::new(manifest, config, params, Some(out))?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    pub split: Split,
    pub n_draws: usize,
    pub per_class: Option<usize>,
    pub seed: u64,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            split: Split::Test,
            n_draws: DEFAULT_DRAWS,
            per_class: None,
            seed: 0,
        }
    }
}

/// Evaluates a checkpoint; writes `report.json`, `confusion.csv` and
/// `confusion.svg` to `out`.
pub fn run_evaluate(
    checkpoint: &Path,
    manifest: &DatasetManifest,
    out: &Path,
    opts: &EvaluateOptions,
) -> Result<EvaluationReport> {
    let params = load_checkpoint(checkpoint)?;
    let report = evaluate(&params, manifest, opts.split, opts.n_draws, opts.per_class, opts.seed)?;
    create_dir(out)?;
    write_atomic(&out.join(REPORT_FILE), &to_json_bytes(&report, "report")?)?;
    render_confusion(&report, out, CONFUSION_STEM)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CamOptions {
    /// Explained class; the predicted class when unset.
    pub class_index: Option<usize>,
    pub alpha: f64,
}

impl Default for CamOptions {
    fn default() -> Self {
        CamOptions {
            class_index: None,
            alpha: 0.5,
        }
    }
}

/// Patch containers at `input`: the file itself or every container below
/// the directory, sorted.
pub fn patch_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out = BTreeSet::new();
    let mut stack = vec![input.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = e.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == PATCH_EXTENSION) {
                out.insert(p);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Invalid(format!("no .{PATCH_EXTENSION} files under {}", input.display())));
    }
    Ok(out.into_iter().collect())
}

/// Class activation maps for one patch or a directory of patches, normalized
/// with the manifest's statistics. Writes an image triple and sidecar per patch.
pub fn run_cam(
    checkpoint: &Path,
    manifest: &DatasetManifest,
    input: &Path,
    out: &Path,
    opts: &CamOptions,
) -> Result<Vec<CamSidecar>> {
    let params = load_checkpoint(checkpoint)?;
    let classes = params.spec.num_classes;
    if let Some(k) = opts.class_index {
        if k >= classes {
            return Err(Error::ClassOutOfRange { index: k, classes });
        }
    }
    if !(0.0..=1.0).contains(&opts.alpha) {
        return Err(Error::Invalid(format!("alpha {} is outside [0, 1]", opts.alpha)));
    }
    let files = patch_inputs(input)?;
    create_dir(out)?;
    files
        .par_iter()
        .map(|file| {
            let pixels = crate::ingest::patch::read_container(file)?;
            let x = normalize(&pixels, &manifest.norm_stats)?;
            let predicted = predicted_class(&params, &x)?;
            let k = opts.class_index.unwrap_or(predicted);
            let cam = compute_cam(&params, &x, k)?;
            let rgb = rgb_composite(&pixels, DEFAULT_STRETCH)?;
            let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let sidecar = CamSidecar {
                patch: file.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                class_index: k,
                class_name: manifest.label_map.name(k).unwrap_or("?").to_string(),
                predicted_class: predicted,
                logit: cam.logit,
                constant: cam.constant,
                alpha: opts.alpha,
            };
            write_cam_outputs(out, &stem, &rgb, &cam, &sidecar)?;
            Ok(sidecar)
        })
        .collect()
}
