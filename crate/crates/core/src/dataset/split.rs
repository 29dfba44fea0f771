use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BACKGROUND_SITE;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// Unit of random assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Every patch is assigned independently.
    #[default]
    PerImage,
    /// All patches of a site go to the same split; background patches are
    /// assigned individually.
    PerSite,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "per_image" | "image" => Ok(Granularity::PerImage),
            "per_site" | "site" => Ok(Granularity::PerSite),
            other => Err(Error::Invalid(format!("unknown granularity {other:?}"))),
        }
    }
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

/// A patch before split assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub path: String,
    pub site_id: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub path: String,
    pub site_id: String,
    pub label: usize,
    pub split: Split,
}

fn check_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|v| !(0.0..=1.0).contains(v)) || ((f[0] + f[1] + f[2]) - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split fractions {f:?} must be in [0, 1] and sum to 1")));
    }
    Ok(())
}

/// Assigns units (groups of patch indices) of one class to splits, always
/// filling the split furthest below its target patch count. Ties go to the
/// earlier split.
fn assign_units(units: &[Vec<usize>], fractions: [f64; 3], out: &mut [Option<Split>]) {
    let total: usize = units.iter().map(Vec::len).sum();
    let targets = fractions.map(|f| f * total as f64);
    let mut filled = [0usize; 3];
    for unit in units {
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for s in 0..3 {
            let deficit = targets[s] - filled[s] as f64;
            if deficit > best_deficit + 1e-12 {
                best = s;
                best_deficit = deficit;
            }
        }
        filled[best] += unit.len();
        for &i in unit {
            out[i] = Some(Split::ALL[best]);
        }
    }
}

/// Randomly partitions patches into train/val/test, class by class.
///
/// With single-patch units the per-class split sizes are the rounded targets
/// (80/10/10 for 100 patches). Every class that occurs in `patches` must end
/// up in all three splits.
pub fn split_dataset(
    patches: &[PatchEntry],
    fractions: [f64; 3],
    seed: u64,
    granularity: Granularity,
) -> Result<Vec<PatchRecord>> {
    if patches.is_empty() {
        return Err(Error::Invalid("no patches to split".into()));
    }
    check_fractions(fractions)?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in patches.iter().enumerate() {
        by_class.entry(p.label).or_default().push(i);
    }
    let mut assigned: Vec<Option<Split>> = vec![None; patches.len()];
    for (&class, members) in &by_class {
        let mut units: Vec<Vec<usize>> = match granularity {
            Granularity::PerImage => members.iter().map(|&i| vec![i]).collect(),
            Granularity::PerSite => {
                let mut sites: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                let mut singles = Vec::new();
                for &i in members {
                    let site = patches[i].site_id.as_str();
                    if site == BACKGROUND_SITE {
                        singles.push(vec![i]);
                    } else {
                        sites.entry(site).or_default().push(i);
                    }
                }
                sites.into_values().chain(singles).collect()
            }
        };
        units.shuffle(&mut seed::rng(seed, class as u64));
        assign_units(&units, fractions, &mut assigned);
    }
    let records: Vec<PatchRecord> = patches
        .iter()
        .zip(assigned)
        .map(|(p, s)| PatchRecord {
            path: p.path.clone(),
            site_id: p.site_id.clone(),
            label: p.label,
            split: s.expect("every patch assigned"),
        })
        .collect();
    for &class in by_class.keys() {
        for split in Split::ALL {
            if !records.iter().any(|r| r.label == class && r.split == split) {
                return Err(Error::EmptyClass {
                    class: class.to_string(),
                    split: split.name().into(),
                });
            }
        }
    }
    Ok(records)
}

/// Patch counts per (label, split).
pub fn split_counts(records: &[PatchRecord]) -> BTreeMap<(usize, Split), usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry((r.label, r.split)).or_insert(0) += 1;
    }
    counts
}

/// Sites that appear in more than one split (always empty for per-site splits).
pub fn leaked_sites(records: &[PatchRecord]) -> BTreeSet<String> {
    let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
    let mut leaked = BTreeSet::new();
    for r in records.iter().filter(|r| r.site_id != BACKGROUND_SITE) {
        match seen.get(r.site_id.as_str()) {
            Some(&s) if s != r.split => {
                leaked.insert(r.site_id.clone());
            }
            Some(_) => {}
            None => {
                seen.insert(&r.site_id, r.split);
            }
        }
    }
    leaked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(classes: &[(usize, usize)], per_site: usize) -> Vec<PatchEntry> {
        let mut v = Vec::new();
        for &(label, n) in classes {
            for i in 0..n {
                v.push(PatchEntry {
                    path: format!("{label}/{i}.patch"),
                    site_id: format!("site-{label}-{}", i / per_site),
                    label,
                });
            }
        }
        v
    }

    #[test]
    fn eighty_ten_ten() {
        let r = split_dataset(&entries(&[(0, 100)], 1), DEFAULT_FRACTIONS, 1, Granularity::PerImage).unwrap();
        let c = split_counts(&r);
        assert_eq!(c[&(0, Split::Train)], 80);
        assert_eq!(c[&(0, Split::Val)], 10);
        assert_eq!(c[&(0, Split::Test)], 10);
    }

    #[test]
    fn per_site_is_atomic() {
        let r = split_dataset(&entries(&[(0, 100)], 10), DEFAULT_FRACTIONS, 3, Granularity::PerSite).unwrap();
        for (_, n) in split_counts(&r) {
            assert_eq!(n % 10, 0);
        }
        assert!(leaked_sites(&r).is_empty());
    }

    #[test]
    fn deterministic() {
        let e = entries(&[(0, 30), (1, 40)], 1);
        let a = split_dataset(&e, DEFAULT_FRACTIONS, 9, Granularity::PerImage).unwrap();
        assert_eq!(a, split_dataset(&e, DEFAULT_FRACTIONS, 9, Granularity::PerImage).unwrap());
        assert_ne!(a, split_dataset(&e, DEFAULT_FRACTIONS, 10, Granularity::PerImage).unwrap());
    }

    #[test]
    fn too_small_class_is_reported() {
        let err = split_dataset(&entries(&[(0, 50), (3, 2)], 1), DEFAULT_FRACTIONS, 0, Granularity::PerImage)
            .unwrap_err();
        assert!(matches!(err, Error::EmptyClass { ref class, .. } if class == "3"), "{err}");
    }

    #[test]
    fn bad_fractions() {
        assert!(split_dataset(&entries(&[(0, 10)], 1), [0.5, 0.5, 0.5], 0, Granularity::PerImage).is_err());
    }
}
