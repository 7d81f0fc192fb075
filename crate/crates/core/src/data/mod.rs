//! Dataset ingestion, preprocessing, labeled-subset sampling and the
//! procedural toy world.

pub mod directory;
pub mod preprocess;
pub mod toy;

pub use directory::{load_directory_dataset, load_split_dir, save_split_dir};
pub use preprocess::{preprocess, Transform};
pub use toy::{generate_toy_dataset, Background, DomainStyle, ToyWorldSpec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{DatasetSplit, Label, IGNORE};
use crate::error::{Error, Result};
use crate::networks::Normalization;

/// Requested size of a labeled subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetSize {
    /// Fraction of the labeled pool, rounded down but at least one.
    Fraction(f64),
    Count(usize),
}

impl SubsetSize {
    pub fn resolve(self, pool: usize) -> Result<usize> {
        let n = match self {
            SubsetSize::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::usage(format!("subset fraction {f} outside (0, 1]")));
                }
                ((f * pool as f64).floor() as usize).max(1)
            }
            SubsetSize::Count(n) => n,
        };
        if n > pool {
            return Err(Error::usage(format!(
                "requested {n} labeled samples from a pool of {pool}"
            )));
        }
        Ok(n)
    }
}

/// Indices of the labeled subset in draw order. The order depends only on
/// the pool and the seed, so smaller requests are prefixes of larger ones.
pub fn labeled_subset_indices(split: &DatasetSplit, size: SubsetSize, seed: u64) -> Result<Vec<usize>> {
    let mut pool: Vec<usize> = split.labeled_indices().iter().copied().collect();
    let n = size.resolve(pool.len())?;
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pool.truncate(n);
    Ok(pool)
}

/// Labeled subset as its own split, in original sample order.
pub fn sample_labeled_subset(split: &DatasetSplit, size: SubsetSize, seed: u64) -> Result<DatasetSplit> {
    let mut idx = labeled_subset_indices(split, size, seed)?;
    idx.sort_unstable();
    split.select(&idx)
}

/// Inverse class frequency over labeled pixels (or samples), scaled to mean
/// one. Classes that never occur receive the largest observed weight.
pub fn class_weights(split: &DatasetSplit) -> Result<Vec<f32>> {
    let c = split.num_classes();
    let mut counts = vec![0u64; c];
    for s in split.samples() {
        match &s.label {
            Some(Label::Class(k)) if *k < c => counts[*k] += 1,
            Some(Label::Mask(m)) => {
                for &v in m.data() {
                    if v != IGNORE && (v as usize) < c {
                        counts[v as usize] += 1;
                    }
                }
            }
            _ => {}
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::usage("class weights need labeled data"));
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&n| if n > 0 { total as f64 / n as f64 } else { 0.0 })
        .collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    let raw: Vec<f64> = raw.iter().map(|&w| if w > 0.0 { w } else { max }).collect();
    let mean = raw.iter().sum::<f64>() / c as f64;
    Ok(raw.iter().map(|w| (w / mean) as f32).collect())
}

/// Per-channel mean and standard deviation over every pixel of the split.
pub fn normalization_stats(split: &DatasetSplit) -> Result<Normalization> {
    let (c, _, _) = split
        .image_shape()
        .ok_or_else(|| Error::usage("normalization statistics of an empty split"))?;
    let mut sum = vec![0.0f64; c];
    let mut sq = vec![0.0f64; c];
    let mut n = 0usize;
    for s in split.samples() {
        let (sc, h, w) = s.image.shape();
        if sc != c {
            return Err(Error::usage("split mixes channel counts"));
        }
        for (i, &v) in s.image.data().iter().enumerate() {
            let ch = i / (h * w);
            sum[ch] += f64::from(v);
            sq[ch] += f64::from(v) * f64::from(v);
        }
        n += s.image.height() * s.image.width();
    }
    let n = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n - m * m).max(0.0).sqrt().max(1e-3)) as f32)
        .collect();
    Ok(Normalization {
        mean: mean.iter().map(|&m| m as f32).collect(),
        std,
    })
}
