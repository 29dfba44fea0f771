use rand::seq::{IndexedRandom, SliceRandom};

use crate::error::{Error, Result};
use crate::seed;

/// Median class size (lower median for an even number of classes).
pub fn median_class_size(members: &[Vec<usize>]) -> usize {
    let mut sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    sizes.sort_unstable();
    sizes.get(sizes.len().saturating_sub(1) / 2).copied().unwrap_or(0)
}

/// Draws exactly `per_class` items from every class and shuffles the result.
///
/// `members[c]` lists the items of class `c`. Classes with at least
/// `per_class` items are subsampled without replacement; smaller classes
/// contribute every item once and fill the remainder with replacement.
pub fn balanced_draw(members: &[Vec<usize>], per_class: usize, seed: u64) -> Result<Vec<usize>> {
    if per_class == 0 {
        return Err(Error::Invalid("per_class must be positive".into()));
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass {
            class: c.to_string(),
            split: "draw".into(),
        });
    }
    let mut out = Vec::with_capacity(per_class * members.len());
    for (c, items) in members.iter().enumerate() {
        let mut rng = seed::rng(seed, c as u64);
        if items.len() >= per_class {
            out.extend(items.choose_multiple(&mut rng, per_class).copied());
        } else {
            out.extend(items.iter().copied());
            for _ in items.len()..per_class {
                out.push(*items.choose(&mut rng).expect("nonempty"));
            }
        }
    }
    out.shuffle(&mut seed::rng(seed, u64::MAX));
    Ok(out)
}
