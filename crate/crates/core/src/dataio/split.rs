use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use crate::error::{Error, Result};
use crate::rng;

const SPLIT_STREAM: u64 = 0x7370_6c69;
const SUBSET_STREAM: u64 = 0x7375_6273;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub holdout_objects_per_class: usize,
    pub seed: u64,
}

/// Hold out `holdout_objects_per_class` whole objects per class. Returns
/// `(train, test)`; the choice depends only on the seed and the class's object ids.
pub fn split_objects(manifest: &Manifest, split: SplitSpec) -> Result<(Manifest, Manifest)> {
    let holdout = split.holdout_objects_per_class;
    let keys = manifest.object_keys();
    let mut test_objects = Vec::new();
    for class_id in manifest.class_ids() {
        let mut objects: Vec<u32> = keys.iter().filter(|k| k.0 == class_id).map(|k| k.1).collect();
        if holdout == 0 || objects.len() <= holdout {
            return Err(Error::Split {
                class_id,
                count: objects.len(),
                holdout,
            });
        }
        let mut r = rng::derived(split.seed, &[SPLIT_STREAM, class_id as u64]);
        objects.shuffle(&mut r);
        test_objects.extend(objects[..holdout].iter().map(|&o| (class_id, o)));
    }
    test_objects.sort_unstable();
    let is_test = |key: (u32, u32)| test_objects.binary_search(&key).is_ok();
    let train = manifest.filter(|r| !is_test(r.object_key()));
    let test = manifest.filter(|r| is_test(r.object_key()));
    Ok((train, test))
}

/// Uniform sample of `round(fraction * len)` frames without replacement,
/// kept in manifest order.
pub fn sample_eval_subset(manifest: &Manifest, fraction: f64, seed: u64) -> Result<Manifest> {
    Ok(manifest.subset(&sample_eval_indices(manifest, fraction, seed)?))
}

/// Manifest positions chosen by [`sample_eval_subset`], ascending.
pub fn sample_eval_indices(manifest: &Manifest, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Fraction(fraction));
    }
    let n = manifest.len();
    let k = (fraction * n as f64).round() as usize;
    let mut r = rng::derived(seed, &[SUBSET_STREAM]);
    let mut idx = rand::seq::index::sample(&mut r, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}
