use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::source_index;
use super::sampler::{balanced_draw, median_class_size};
use super::split::{split_dataset, Granularity, PatchEntry, PatchRecord, Split, DEFAULT_FRACTIONS};
use super::stats::{NormStats, StatsAccumulator, StatsScope};
use super::synthetic::{generate_synthetic, SyntheticSceneSpec};
use crate::classes::{LabelMap, Task};
use crate::error::{Error, Result};
use crate::ingest::patch::{read_container, read_sidecar, PATCH_EXTENSION};
use crate::model::Activation;
use crate::seed;

/// Scheme of patch paths that are regenerated from the synthetic fixture
/// instead of read from disk: `synthetic://<class>/<seed>`.
pub const SYNTHETIC_SCHEME: &str = "synthetic://";

pub fn synthetic_path(class: usize, seed: u64) -> String {
    format!("{SYNTHETIC_SCHEME}{class}/{seed}")
}

fn parse_synthetic(path: &str) -> Option<(usize, u64)> {
    let rest = path.strip_prefix(SYNTHETIC_SCHEME)?;
    let (c, s) = rest.split_once('/')?;
    Some((c.parse().ok()?, s.parse().ok()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    pub label_map: LabelMap,
    pub patches: Vec<PatchRecord>,
    pub norm_stats: NormStats,
    pub stats_scope: StatsScope,
    pub split_fractions: [f64; 3],
    pub granularity: Granularity,
    pub rng_seed: u64,
    /// Generator settings when patches use `synthetic://` paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSceneSpec>,
    /// Directory that relative patch paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Inputs of [`DatasetManifest::build`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOptions {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub granularity: Granularity,
    pub stats_scope: StatsScope,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            fractions: DEFAULT_FRACTIONS,
            seed: 0,
            granularity: Granularity::PerImage,
            stats_scope: StatsScope::AllImages,
        }
    }
}

impl DatasetManifest {
    /// Splits `patches`, then computes normalization statistics over the
    /// chosen scope in one streaming pass.
    pub fn build(
        task: Task,
        patches: &[PatchEntry],
        base_dir: &Path,
        synthetic: Option<SyntheticSceneSpec>,
        opts: &BuildOptions,
    ) -> Result<Self> {
        let label_map = task.label_map();
        if let Some(p) = patches.iter().find(|p| p.label >= label_map.len()) {
            return Err(Error::LabelOutOfRange {
                label: p.label,
                classes: label_map.len(),
            });
        }
        let records = split_dataset(patches, opts.fractions, opts.seed, opts.granularity)?;
        let mut manifest = DatasetManifest {
            task,
            label_map,
            patches: records,
            norm_stats: NormStats::identity(0),
            stats_scope: opts.stats_scope,
            split_fractions: opts.fractions,
            granularity: opts.granularity,
            rng_seed: opts.seed,
            synthetic,
            base_dir: base_dir.to_path_buf(),
        };
        let mut acc = StatsAccumulator::new();
        for i in 0..manifest.patches.len() {
            if opts.stats_scope == StatsScope::TrainOnly && manifest.patches[i].split != Split::Train {
                continue;
            }
            acc.push(&manifest.load_pixels(i)?)?;
        }
        manifest.norm_stats = acc.finish()?;
        Ok(manifest)
    }

    /// `per_class` generated patches for every class of `task`.
    pub fn synthetic(task: Task, per_class: usize, spec: SyntheticSceneSpec, opts: &BuildOptions) -> Result<Self> {
        let spec = SyntheticSceneSpec { task, ..spec };
        let patches: Vec<PatchEntry> = (0..task.num_classes())
            .flat_map(|c| {
                (0..per_class).map(move |k| PatchEntry {
                    path: synthetic_path(c, seed::derive_seed(opts.seed, (c * 1_000_000 + k) as u64)),
                    site_id: format!("synthetic-{c}-{k}"),
                    label: c,
                })
            })
            .collect();
        Self::build(task, &patches, Path::new(""), Some(spec), opts)
    }

    pub fn num_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Raw (unnormalized) pixels of patch `i`.
    pub fn load_pixels(&self, i: usize) -> Result<Array3<f32>> {
        let rec = &self.patches[i];
        if let Some((class, s)) = parse_synthetic(&rec.path) {
            let spec = self.synthetic.as_ref().ok_or_else(|| Error::PatchFormat {
                path: rec.path.clone().into(),
                message: "synthetic patch in a manifest without generator settings".into(),
            })?;
            return Ok(generate_synthetic(class, s, spec)?.pixels);
        }
        read_container(&self.resolve(&rec.path))
    }

    /// Normalized network input for patches `indices`; `transforms[i]` is the
    /// dihedral transform applied to the i-th patch.
    pub fn load_batch(&self, indices: &[usize], transforms: Option<&[u8]>) -> Result<Activation<f32>> {
        if let Some(t) = transforms {
            if t.len() != indices.len() {
                return Err(Error::Shape(format!("{} transforms for {} patches", t.len(), indices.len())));
            }
        }
        self.norm_stats.validate()?;
        let loaded: Vec<Array3<f32>> = indices
            .par_iter()
            .map(|&i| self.load_pixels(i))
            .collect::<Result<_>>()?;
        let Some(first) = loaded.first() else {
            return Err(Error::Shape("empty batch".into()));
        };
        let (c, h, w) = first.dim();
        if c != self.norm_stats.mean.len() {
            return Err(Error::Shape(format!("patch has {c} bands, stats have {}", self.norm_stats.mean.len())));
        }
        let mut batch = Activation::zeros(loaded.len(), c, h, w);
        let sample = batch.sample_len();
        batch
            .data
            .par_chunks_mut(sample)
            .zip(loaded.par_iter())
            .enumerate()
            .try_for_each(|(k, (out, px))| -> Result<()> {
                if px.dim() != (c, h, w) {
                    return Err(Error::Shape(format!("patch {} is {:?}, batch is {:?}", indices[k], px.dim(), (c, h, w))));
                }
                super::stats::normalize_into(px, &self.norm_stats, out);
                let id = transforms.map(|t| t[k]).unwrap_or(0);
                if id != 0 {
                    if h != w {
                        return Err(Error::Shape("augmentation needs square patches".into()));
                    }
                    let index = source_index(id, h)?;
                    super::augment::augment_flat(out, c, h, &index, &mut Vec::new());
                }
                Ok(())
            })?;
        Ok(batch)
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.patches[i].label).collect()
    }

    /// Indices of every patch in `split`, grouped by label.
    pub fn members(&self, split: Split) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.num_classes()];
        for (i, r) in self.patches.iter().enumerate() {
            if r.split == split {
                m[r.label].push(i);
            }
        }
        m
    }

    /// Fails with the first class that has no patch in `split`.
    pub fn require_all_classes(&self, split: Split) -> Result<()> {
        if let Some(c) = self.members(split).iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass {
                class: self.label_map.name(c).unwrap_or("?").to_string(),
                split: split.name().into(),
            });
        }
        Ok(())
    }

    pub fn median_class_size(&self, split: Split) -> usize {
        median_class_size(&self.members(split))
    }

    pub fn smallest_class_size(&self, split: Split) -> usize {
        self.members(split).iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Balanced, shuffled patch indices of `split`: exactly `per_class` per
    /// class (defaulting to the median class size).
    pub fn balanced_epoch(&self, split: Split, per_class: Option<usize>, seed: u64) -> Result<Vec<usize>> {
        self.require_all_classes(split)?;
        let members = self.members(split);
        balanced_draw(&members, per_class.unwrap_or_else(|| median_class_size(&members)), seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_string_pretty(self).map_err(|e| Error::json("manifest", e))?;
        json.push('\n');
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.norm_stats.validate()?;
        Ok(m)
    }
}

/// Path of `target` relative to directory `base`, both made absolute first.
pub fn relative_path(target: &Path, base: &Path) -> PathBuf {
    let abs = |p: &Path| {
        let p = if p.is_absolute() {
            p.to_path_buf()
        } else {
            std::env::current_dir().unwrap_or_default().join(p)
        };
        p.components().fold(PathBuf::new(), |mut acc, c| {
            match c {
                std::path::Component::CurDir => {}
                std::path::Component::ParentDir => {
                    acc.pop();
                }
                other => acc.push(other),
            }
            acc
        })
    };
    let (t, b) = (abs(target), abs(base));
    let tc: Vec<_> = t.components().collect();
    let bc: Vec<_> = b.components().collect();
    let common = tc.iter().zip(&bc).take_while(|(a, b)| a == b).count();
    let mut out = PathBuf::new();
    for _ in common..bc.len() {
        out.push("..");
    }
    for c in &tc[common..] {
        out.push(c);
    }
    out
}

/// Every patch container below `store`, in sorted path order, with the label
/// for `task` taken from its sidecar. For the cooling task only thermal
/// patches with a recorded cooling class are kept.
pub fn scan_patch_store(store: &Path, task: Task, manifest_dir: &Path) -> Result<Vec<PatchEntry>> {
    let mut files = Vec::new();
    collect_patches(store, &mut files)?;
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let meta = read_sidecar(&f)?;
        let label = match task {
            Task::Plant => meta.label,
            Task::Cooling => match meta.cooling_class {
                Some(c) => c.index(),
                None => continue,
            },
        };
        out.push(PatchEntry {
            path: relative_path(&f, manifest_dir).to_string_lossy().replace('\\', "/"),
            site_id: meta.site_id,
            label,
        });
    }
    Ok(out)
}

fn collect_patches(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for e in entries {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let p = e.path();
        if p.is_dir() {
            collect_patches(&p, out)?;
        } else if p.extension().is_some_and(|x| x == PATCH_EXTENSION) {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_paths() {
        assert_eq!(parse_synthetic(&synthetic_path(3, 42)), Some((3, 42)));
        assert_eq!(parse_synthetic("a/b.patch"), None);
    }

    #[test]
    fn relative_paths() {
        assert_eq!(
            relative_path(Path::new("/a/b/c/x.patch"), Path::new("/a/d")),
            PathBuf::from("../b/c/x.patch")
        );
        assert_eq!(relative_path(Path::new("/a/x"), Path::new("/a")), PathBuf::from("x"));
    }

    #[test]
    fn synthetic_manifest_roundtrip() {
        let opts = BuildOptions {
            seed: 4,
            ..Default::default()
        };
        let m = DatasetManifest::synthetic(Task::Cooling, 10, SyntheticSceneSpec::cooling(), &opts).unwrap();
        assert_eq!(m.patches.len(), 40);
        assert_eq!(m.members(Split::Train).iter().map(Vec::len).collect::<Vec<_>>(), vec![8; 4]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let mut back = DatasetManifest::load(&path).unwrap();
        back.base_dir = m.base_dir.clone();
        assert_eq!(back, m);
        let epoch = m.balanced_epoch(Split::Train, None, 1).unwrap();
        assert_eq!(epoch.len(), 32);
    }
}
