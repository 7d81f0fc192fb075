//! Shared domain types: images, labels, samples, dataset splits and the
//! per-step loss record.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use tada_tensor::{Real, Tensor};

use crate::error::{Error, Result};

/// Mask value for pixels that carry no class (excluded from losses and metrics).
pub const IGNORE: u8 = 255;

/// Channels-first image with intensities normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    /// Fails when `data` does not fill the shape or holds non-finite values.
    /// The `[-1, 1]` range is the responsibility of ingestion and is checked
    /// by [`validate_dataset`].
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::usage(format!(
                "image data of length {} does not fill {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("image contains non-finite values"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Per-pixel class indices, or [`IGNORE`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::usage(format!(
                "mask data of length {} does not fill {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Class(usize),
    Mask(LabelMask),
}

impl Label {
    /// Flattened targets with [`IGNORE`] kept as `255`.
    pub fn targets(&self) -> Vec<usize> {
        match self {
            Label::Class(c) => vec![*c],
            Label::Mask(m) => m.data.iter().map(|&v| v as usize).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Real,
    Synthetic,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Real => "real",
            Domain::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: Option<Label>,
    pub domain: Domain,
}

/// Ordered samples of one split. `labeled_indices` lists the samples whose
/// label is present.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    samples: Vec<Sample>,
    num_classes: usize,
    labeled_indices: BTreeSet<usize>,
}

impl DatasetSplit {
    pub fn new(samples: Vec<Sample>, num_classes: usize) -> Self {
        let labeled_indices = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label.is_some())
            .map(|(i, _)| i)
            .collect();
        Self {
            samples,
            num_classes,
            labeled_indices,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labeled_indices(&self) -> &BTreeSet<usize> {
        &self.labeled_indices
    }

    pub fn num_labeled(&self) -> usize {
        self.labeled_indices.len()
    }

    /// New split holding `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::usage(format!("sample index {i} out of {}", self.len())))
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(samples, self.num_classes))
    }

    /// Same images with every label dropped.
    pub fn without_labels(&self) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                label: None,
                ..s.clone()
            })
            .collect();
        Self::new(samples, self.num_classes)
    }

    /// Image shape shared by the split, if any samples exist.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.samples.first().map(|s| s.image.shape())
    }
}

/// Scalar loss components of one optimization step plus the weights used.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBundle {
    pub g_adv_r2s: f64,
    pub g_adv_s2r: f64,
    pub cycle: f64,
    pub identity: f64,
    pub d_s: f64,
    pub d_r: f64,
    pub task: Option<f64>,
    pub g_total: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
}

impl LossBundle {
    /// Checks finiteness of every component and the hyperparameter ranges.
    pub fn check(&self) -> Result<()> {
        let values = [
            self.g_adv_r2s,
            self.g_adv_s2r,
            self.cycle,
            self.identity,
            self.d_s,
            self.d_r,
            self.task.unwrap_or(0.0),
            self.g_total,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("loss bundle holds a non-finite component"));
        }
        crate::losses::LossWeights {
            lambda_cyc: self.lambda_cyc,
            lambda_id: self.lambda_id,
            alpha: self.alpha,
            gamma: self.gamma,
        }
        .check()
    }
}

/// One violated invariant found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub sample: Option<usize>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sample {
            Some(i) => write!(f, "sample {i}: {}", self.rule),
            None => write!(f, "split: {}", self.rule),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports every broken invariant of `split`. Never fails.
pub fn validate_dataset(split: &DatasetSplit) -> ValidationReport {
    let mut violations = Vec::new();
    let c = split.num_classes;
    if c == 0 || c > IGNORE as usize {
        violations.push(Violation {
            sample: None,
            rule: format!("class count {c} outside 1..=255"),
        });
    }
    let mut push = |i: usize, rule: String| violations.push(Violation { sample: Some(i), rule });
    for (i, s) in split.samples.iter().enumerate() {
        let img = &s.image;
        if img.data.iter().any(|v| !v.is_finite()) {
            push(i, "image holds non-finite values".into());
        } else if img.data.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            push(i, "image values outside [-1, 1]".into());
        }
        match &s.label {
            None if s.domain == Domain::Synthetic => {
                push(i, "synthetic sample without label".into());
            }
            None => {}
            Some(Label::Class(k)) if *k >= c => {
                push(i, format!("class index {k} not below class count {c}"));
            }
            Some(Label::Class(_)) => {}
            Some(Label::Mask(m)) => {
                if (m.height, m.width) != (img.height, img.width) {
                    push(
                        i,
                        format!(
                            "mask shape {}x{} differs from image shape {}x{}",
                            m.height, m.width, img.height, img.width
                        ),
                    );
                }
                if let Some(bad) = m.data.iter().find(|&&v| v != IGNORE && v as usize >= c) {
                    push(i, format!("mask class {bad} not below class count {c}"));
                }
            }
        }
    }
    let expected: BTreeSet<usize> = split
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label.is_some())
        .map(|(i, _)| i)
        .collect();
    if expected != split.labeled_indices {
        violations.push(Violation {
            sample: None,
            rule: "labeled index set does not match the samples carrying labels".into(),
        });
    }
    ValidationReport { violations }
}

/// Validates several splits of one experiment, including the shared class count.
pub fn validate_splits(splits: &[&DatasetSplit]) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (k, split) in splits.iter().enumerate() {
        for v in validate_dataset(split).violations {
            report.violations.push(Violation {
                sample: v.sample,
                rule: format!("split {k}: {}", v.rule),
            });
        }
    }
    if let Some(first) = splits.first() {
        for (k, split) in splits.iter().enumerate().skip(1) {
            if split.num_classes != first.num_classes {
                report.violations.push(Violation {
                    sample: None,
                    rule: format!(
                        "split {k} has {} classes, split 0 has {}",
                        split.num_classes, first.num_classes
                    ),
                });
            }
        }
    }
    report
}

/// Stack images into an `(N, C, H, W)` tensor.
pub fn batch_images<T: Real>(images: &[&Image]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::usage("empty image batch"))?;
    let (c, h, w) = first.shape();
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if img.shape() != (c, h, w) {
            return Err(Error::usage(format!(
                "image batch mixes shapes {:?} and {:?}",
                (c, h, w),
                img.shape()
            )));
        }
        data.extend(img.data.iter().map(|&v| T::from_f64_lossy(f64::from(v))));
    }
    Ok(Tensor::from_vec(data, &[images.len(), c, h, w])?)
}

/// Split an `(N, C, H, W)` tensor back into images.
pub fn unbatch_images<T: Real>(t: &Tensor<T>) -> Result<Vec<Image>> {
    let (n, c, h, w) = t.dims4()?;
    let per = c * h * w;
    (0..n)
        .map(|i| {
            let data = t.data()[i * per..(i + 1) * per]
                .iter()
                .map(|v| v.to_f64_lossy() as f32)
                .collect();
            Image::new(c, h, w, data)
        })
        .collect()
}

/// Concatenated targets of a batch of labels.
pub fn batch_targets(labels: &[&Label]) -> Vec<usize> {
    labels.iter().flat_map(|l| l.targets()).collect()
}
