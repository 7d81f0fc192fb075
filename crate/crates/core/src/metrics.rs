//! Accuracy, confusion matrices, IoU/mIoU, the domain-gap arithmetic and
//! the flat metric record files.
//!
//! Record files are comma separated with a fixed header:
//!
//! ```text
//! run_id,stage,alpha,gamma,n_labeled,epoch,metric,value
//! ```
//!
//! `alpha`, `gamma` and `n_labeled` are empty when they do not apply to the
//! stage. `value` is a plain float (fractions, not percent).

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{LabelMask, IGNORE};
use crate::error::{Error, Result};

/// `C x C` counts, rows are ground truth and columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    /// Count `(truth, prediction)` pairs, skipping [`IGNORE`] ground truth.
    pub fn accumulate(&mut self, predicted: &[usize], truth: &[usize]) -> Result<()> {
        if predicted.len() != truth.len() {
            return Err(Error::usage(format!(
                "{} predictions for {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let c = self.num_classes;
        for (&p, &t) in predicted.iter().zip(truth) {
            if t == IGNORE as usize {
                continue;
            }
            if t >= c || p >= c {
                return Err(Error::usage(format!("class pair ({t}, {p}) outside {c} classes")));
            }
            self.counts[t * c + p] += 1;
        }
        Ok(())
    }

    pub fn accumulate_masks(&mut self, predicted: &LabelMask, truth: &LabelMask) -> Result<()> {
        if (predicted.height(), predicted.width()) != (truth.height(), truth.width()) {
            return Err(Error::usage(format!(
                "prediction {}x{} does not match ground truth {}x{}",
                predicted.height(),
                predicted.width(),
                truth.height(),
                truth.width()
            )));
        }
        let p: Vec<usize> = predicted.data().iter().map(|&v| v as usize).collect();
        let t: Vec<usize> = truth.data().iter().map(|&v| v as usize).collect();
        self.accumulate(&p, &t)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::usage(
                "cannot merge confusion matrices of different class counts",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Fraction of counted entries on the diagonal.
    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::usage("accuracy of an empty confusion matrix")),
            n => Ok(self.trace() as f64 / n as f64),
        }
    }
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::usage(format!(
            "accuracy needs equal nonempty inputs, got {} and {}",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// `TP / (TP + FP + FN)` per class; `None` where the denominator is zero.
pub fn iou_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    let c = cm.num_classes;
    (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let row: u64 = (0..c).map(|j| cm.get(k, j)).sum();
            let col: u64 = (0..c).map(|i| cm.get(i, k)).sum();
            let denom = row + col - tp;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect()
}

/// Mean over the defined classes only.
pub fn miou(per_class: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::usage("mIoU needs at least one defined class"));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// `oracle - out_of_domain`. Both values must use the same unit: mixing a
/// fraction (at most 1) with a percentage (above 1) is rejected.
pub fn domain_gap(out_of_domain: f64, oracle: f64) -> Result<f64> {
    if !(out_of_domain.is_finite() && oracle.is_finite()) || out_of_domain < 0.0 || oracle < 0.0 {
        return Err(Error::usage("domain gap inputs must be finite and nonnegative"));
    }
    if (out_of_domain > 1.0) != (oracle > 1.0) {
        return Err(Error::usage(format!(
            "domain gap inputs {out_of_domain} and {oracle} mix fractions and percentages"
        )));
    }
    if out_of_domain > 100.0 || oracle > 100.0 {
        return Err(Error::usage("percentages above 100"));
    }
    Ok(oracle - out_of_domain)
}

/// Percent with two decimals, e.g. `0.43817 -> "43.82"`.
pub fn percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

/// Everything one evaluation pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub iou: Vec<Option<f64>>,
    pub miou: f64,
    pub accuracy: f64,
}

impl Evaluation {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let iou = iou_per_class(&confusion);
        let miou = miou(&iou)?;
        let accuracy = confusion.accuracy()?;
        Ok(Self {
            confusion,
            iou,
            miou,
            accuracy,
        })
    }

    /// Headline number: mIoU for segmentation, accuracy for classification.
    pub fn headline(&self, segmentation: bool) -> f64 {
        if segmentation {
            self.miou
        } else {
            self.accuracy
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub run_id: String,
    pub stage: String,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub n_labeled: Option<usize>,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

/// Append records, writing the header when the file is new or empty.
pub fn append_records(path: &Path, records: &[MetricRecord]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        crate::io::create_dir(parent)?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let fresh = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r).map_err(|e| Error::load(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse a record file's contents. Values must be finite.
pub fn parse_records(text: &str) -> Result<Vec<MetricRecord>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let expected = [
        "run_id",
        "stage",
        "alpha",
        "gamma",
        "n_labeled",
        "epoch",
        "metric",
        "value",
    ];
    let headers = r.headers().map_err(|e| Error::Config(format!("metric records: {e}")))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Config(format!("metric records: unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<MetricRecord>().enumerate() {
        let rec = row.map_err(|e| Error::Config(format!("metric records row {}: {e}", i + 1)))?;
        let finite = [Some(rec.value), rec.alpha, rec.gamma]
            .iter()
            .flatten()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config(format!("metric records row {}: non-finite value", i + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    parse_records(&crate::io::read_string(path)?).map_err(|e| Error::load(path, e.to_string()))
}
