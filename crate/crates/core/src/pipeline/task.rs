//! Supervised training of a task network (the synthetic expert and the
//! small-data real baseline) and evaluation of `f` or `f∘G`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tada_tensor::{Adam, AdamConfig, Tensor};

use super::schedule::poly_lr;
use super::seed_for;
use crate::data::{class_weights, normalization_stats, preprocess, Transform};
use crate::datamodel::{batch_images, DatasetSplit, Image, Label, IGNORE};
use crate::error::{Error, Result};
use crate::losses::weighted_task_loss;
use crate::metrics::{ConfusionMatrix, Evaluation};
use crate::networks::{Generator, Head, TaskArch, TaskNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub poly_power: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub class_weighting: bool,
    /// Horizontal flip probability during training.
    pub hflip: f64,
    /// Lower bound on optimizer steps; raises the epoch count for tiny
    /// training sets.
    pub min_steps: usize,
}

impl Default for TaskTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            lr: 2e-3,
            poly_power: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            class_weighting: true,
            hflip: 0.5,
            min_steps: 0,
        }
    }
}

impl TaskTrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..=1.0).contains(&self.hflip) {
            return Err(Error::Config("task training needs lr > 0 and hflip in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Epochs actually run for `n` training samples.
    pub fn effective_epochs(&self, n: usize) -> usize {
        let per_epoch = n.div_ceil(self.batch_size).max(1);
        self.epochs.max(self.min_steps.div_ceil(per_epoch))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval: Evaluation,
}

#[derive(Debug, Clone)]
pub struct TaskTrainOutcome {
    /// Frozen network of the best validation epoch.
    pub network: TaskNetwork<f32>,
    /// `0` when no epoch ran.
    pub best_epoch: usize,
    pub best_metric: f64,
    pub history: Vec<EpochRecord>,
}

fn targets_of(labels: &[&Label]) -> Vec<usize> {
    labels.iter().flat_map(|l| l.targets()).collect()
}

/// Evaluate `f` (or `f∘g` when a translator is given) on the labeled
/// samples of `split`, accumulating one confusion matrix over the split.
pub fn evaluate(
    f: &TaskNetwork<f32>,
    split: &DatasetSplit,
    translator: Option<&Generator<f32>>,
    batch_size: usize,
) -> Result<Evaluation> {
    if split.num_classes() != f.num_classes() {
        return Err(Error::usage(format!(
            "task network predicts {} classes but the dataset has {}",
            f.num_classes(),
            split.num_classes()
        )));
    }
    let labeled: Vec<usize> = split.labeled_indices().iter().copied().collect();
    if labeled.is_empty() {
        return Err(Error::usage("evaluation split has no labels"));
    }
    let mut cm = ConfusionMatrix::new(f.num_classes());
    for chunk in labeled.chunks(batch_size.max(1)) {
        let images: Vec<&Image> = chunk.iter().map(|&i| &split.samples()[i].image).collect();
        let labels: Vec<&Label> = chunk
            .iter()
            .map(|&i| split.samples()[i].label.as_ref().expect("labeled index"))
            .collect();
        let mut x: Tensor<f32> = batch_images(&images)?;
        if let Some(g) = translator {
            x = g.translate(&x)?;
        }
        let pred = f.predict(&x)?;
        cm.accumulate(&pred, &targets_of(&labels))?;
    }
    Evaluation::from_confusion(cm)
}

fn augmented_batch(
    split: &DatasetSplit,
    indices: &[usize],
    hflip: f64,
    seed: u64,
) -> Result<(Tensor<f32>, Vec<usize>)> {
    let ops = [Transform::HFlip { p: hflip }];
    let mut images = Vec::with_capacity(indices.len());
    let mut targets = Vec::new();
    for (k, &i) in indices.iter().enumerate() {
        let s = &split.samples()[i];
        let label = s.label.as_ref().expect("labeled index");
        let mask = match label {
            Label::Mask(m) => Some(m),
            Label::Class(_) => None,
        };
        let (img, mask) = preprocess(&s.image, mask, &ops, seed_for(seed, &[k as u64]))?;
        match (label, mask) {
            (Label::Class(c), _) => targets.push(*c),
            (Label::Mask(_), Some(m)) => targets.extend(m.data().iter().map(|&v| v as usize)),
            (Label::Mask(_), None) => unreachable!("masks survive preprocessing"),
        }
        images.push(img);
    }
    let refs: Vec<&Image> = images.iter().collect();
    Ok((batch_images(&refs)?, targets))
}

/// Train a task network from scratch with class-weighted cross entropy,
/// Adam and polynomial learning-rate decay. The network of the best
/// validation epoch (earliest on ties) is returned frozen.
pub fn train_task_network(
    arch: TaskArch,
    cfg: &TaskTrainConfig,
    train: &DatasetSplit,
    val: &DatasetSplit,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TaskTrainOutcome> {
    cfg.check()?;
    if train.is_empty() || train.num_labeled() != train.len() {
        return Err(Error::usage(format!(
            "supervised training needs a fully labeled split ({} of {} samples labeled)",
            train.num_labeled(),
            train.len()
        )));
    }
    if train.num_classes() != arch.num_classes {
        return Err(Error::usage("architecture and dataset disagree on the class count"));
    }
    let segmentation = arch.head == Head::Segmenter;
    let mut net = TaskNetwork::<f32>::new(arch, seed)?;
    net.set_normalization(normalization_stats(train)?)?;
    let weights = if cfg.class_weighting {
        Some(class_weights(train)?)
    } else {
        None
    };
    let adam = AdamConfig {
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        ..AdamConfig::default()
    };
    let mut opt = Adam::new(adam, net.params());
    let epochs = cfg.effective_epochs(train.len());
    let per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = epochs * per_epoch;

    let initial = evaluate(&net, val, None, 16)?;
    let mut best = (initial.headline(segmentation), 0usize, net.clone());
    let mut history = Vec::with_capacity(epochs);
    if epochs == 0 {
        let record = EpochRecord {
            epoch: 0,
            train_loss: f64::NAN,
            eval: initial,
        };
        on_epoch(&record);
        history.push(record);
    }
    let mut step = 0usize;
    for epoch in 1..=epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &[0xA, epoch as u64]));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, targets) = augmented_batch(train, chunk, cfg.hflip, seed_for(seed, &[epoch as u64, b as u64]))?;
            if targets.iter().all(|&t| t == IGNORE as usize) {
                continue;
            }
            let p = net.bind();
            let logits = net.forward(&p, &x)?;
            let loss = weighted_task_loss(&logits, &targets, arch.num_classes, weights.as_deref())?;
            loss_sum += f64::from(loss.item()?);
            let grads = loss.backward();
            let lr = poly_lr(cfg.lr, step, total_steps, cfg.poly_power);
            opt.step(net.params_mut()?, &p, &grads, lr)?;
            step += 1;
        }
        let eval = evaluate(&net, val, None, 16)?;
        let metric = eval.headline(segmentation);
        if metric > best.0 {
            best = (metric, epoch, net.clone());
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / per_epoch as f64,
            eval,
        };
        on_epoch(&record);
        history.push(record);
    }
    let (best_metric, best_epoch, network) = best;
    Ok(TaskTrainOutcome {
        network: network.freeze(),
        best_epoch,
        best_metric,
        history,
    })
}
