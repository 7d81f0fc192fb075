//! Loss terms of the translation objective and its task-aware extension.
//!
//! All terms are differentiable tensor expressions; expectations are realized
//! as means over every element of the batch (per-patch discriminator scores,
//! per-pixel reconstruction errors, per-pixel cross entropy).

use serde::{Deserialize, Serialize};
use tada_tensor::{Real, Tensor};

use crate::datamodel::{LossBundle, IGNORE};
use crate::error::{Error, Result};

/// Discriminator outputs (one score per sample or per patch).
#[derive(Debug, Clone)]
pub struct DiscriminatorScores<T: Real>(Tensor<T>);

impl<T: Real> DiscriminatorScores<T> {
    pub fn new(scores: Tensor<T>) -> Result<Self> {
        if scores.numel() == 0 {
            return Err(Error::usage("empty discriminator scores"));
        }
        if scores.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("non-finite discriminator scores"));
        }
        Ok(Self(scores))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }
}

/// Which generator objective is being optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Task-agnostic translation.
    B,
    /// Task-aware fine-tuning.
    C,
}

/// Loss weights. `alpha`/`gamma` only matter for [`Stage::C`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cyc: 10.0,
            lambda_id: 0.5,
            alpha: 0.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn check(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::usage(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.lambda_cyc >= 0.0 && self.lambda_cyc.is_finite()) {
            return Err(Error::usage(format!(
                "lambda_cyc must be >= 0, got {}",
                self.lambda_cyc
            )));
        }
        if !(self.lambda_id >= 0.0 && self.lambda_id.is_finite()) {
            return Err(Error::usage(format!("lambda_id must be >= 0, got {}", self.lambda_id)));
        }
        Ok(())
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::usage(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn mean_abs_diff<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::usage(format!(
            "reconstruction shape {:?} differs from original {:?}",
            b.shape(),
            a.shape()
        )));
    }
    Ok(b.sub(a)?.abs().mean_all()?)
}

/// Least-squares generator loss: `mean((s - 1)^2)`.
pub fn gen_adversarial_loss<T: Real>(fake: &DiscriminatorScores<T>) -> Result<Tensor<T>> {
    Ok(fake.0.add_scalar(-T::one()).sqr().mean_all()?)
}

/// Least-squares discriminator loss: `mean((real - 1)^2) + mean(fake^2)`.
pub fn disc_loss<T: Real>(real: &DiscriminatorScores<T>, fake: &DiscriminatorScores<T>) -> Result<Tensor<T>> {
    let on_real = real.0.add_scalar(-T::one()).sqr().mean_all()?;
    let on_fake = fake.0.sqr().mean_all()?;
    Ok(on_real.add(&on_fake)?)
}

/// `mean|x_r_rec - x_r| + mean|x_s_rec - x_s|`.
pub fn cycle_loss<T: Real>(
    x_r: &Tensor<T>,
    x_r_reconstructed: &Tensor<T>,
    x_s: &Tensor<T>,
    x_s_reconstructed: &Tensor<T>,
) -> Result<Tensor<T>> {
    Ok(mean_abs_diff(x_r, x_r_reconstructed)?.add(&mean_abs_diff(x_s, x_s_reconstructed)?)?)
}

/// `mean|G_rs(x_s) - x_s| + mean|G_sr(x_r) - x_r|`.
pub fn identity_loss<T: Real>(
    x_s: &Tensor<T>,
    g_r2s_of_xs: &Tensor<T>,
    x_r: &Tensor<T>,
    g_s2r_of_xr: &Tensor<T>,
) -> Result<Tensor<T>> {
    Ok(mean_abs_diff(x_s, g_r2s_of_xs)?.add(&mean_abs_diff(x_r, g_s2r_of_xr)?)?)
}

/// Softmax cross entropy averaged over every non-ignored pixel (or sample)
/// of the batch. `targets` uses [`IGNORE`] for excluded pixels.
pub fn task_loss<T: Real>(logits: &Tensor<T>, targets: &[usize], num_classes: usize) -> Result<Tensor<T>> {
    weighted_task_loss(logits, targets, num_classes, None)
}

/// [`task_loss`] with per-class weights (weighted mean over counted entries).
pub fn weighted_task_loss<T: Real>(
    logits: &Tensor<T>,
    targets: &[usize],
    num_classes: usize,
    class_weights: Option<&[T]>,
) -> Result<Tensor<T>> {
    let classes = logits.shape().get(1).copied();
    if classes != Some(num_classes) {
        return Err(Error::usage(format!(
            "logits of shape {:?} do not carry {num_classes} classes",
            logits.shape()
        )));
    }
    if targets.iter().all(|&t| t == IGNORE as usize) {
        return Err(Error::usage("task loss target has no labeled entries"));
    }
    logits
        .cross_entropy(targets, Some(IGNORE as usize), class_weights)
        .map_err(|e| Error::usage(format!("task loss: {e}")))
}

/// `(1 - alpha) * gen_adversarial_loss + alpha * gamma * task`.
pub fn extended_gen_adversarial_loss<T: Real>(
    fake: &DiscriminatorScores<T>,
    task_value: &Tensor<T>,
    alpha: f64,
    gamma: f64,
) -> Result<Tensor<T>> {
    check_alpha(alpha)?;
    let adv = gen_adversarial_loss(fake)?;
    interpolate(&adv, task_value, alpha, gamma)
}

/// Interpolation of an adversarial value with a scaled task value. The
/// endpoints are exact: `alpha = 0` returns `adv` bit for bit and
/// `alpha = 1` returns `gamma * task`.
pub fn interpolate<T: Real>(adv: &Tensor<T>, task: &Tensor<T>, alpha: f64, gamma: f64) -> Result<Tensor<T>> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        // Keep the task graph attached with weight zero so both endpoints
        // share one code path for gradients.
        return Ok(adv.add(&task.mul_scalar(T::zero()))?);
    }
    let a = adv.mul_scalar(T::from_f64_lossy(1.0 - alpha));
    let t = task.mul_scalar(T::from_f64_lossy(alpha * gamma));
    Ok(a.add(&t)?)
}

/// Differentiable generator terms of one step.
#[derive(Debug, Clone)]
pub struct GeneratorTerms<T: Real> {
    pub adv_r2s: Tensor<T>,
    pub adv_s2r: Tensor<T>,
    pub cycle: Tensor<T>,
    pub identity: Tensor<T>,
    pub task: Option<Tensor<T>>,
}

/// Weighted generator objective on tensors; mirrors [`total_generator_loss`].
pub fn combine_generator_terms<T: Real>(
    terms: &GeneratorTerms<T>,
    weights: &LossWeights,
    stage: Stage,
) -> Result<Tensor<T>> {
    weights.check()?;
    let first = match stage {
        Stage::B => terms.adv_r2s.clone(),
        Stage::C => {
            let task = terms
                .task
                .as_ref()
                .ok_or_else(|| Error::usage("stage C objective needs a task term"))?;
            interpolate(&terms.adv_r2s, task, weights.alpha, weights.gamma)?
        }
    };
    let cyc = terms.cycle.mul_scalar(T::from_f64_lossy(weights.lambda_cyc));
    let id = terms
        .identity
        .mul_scalar(T::from_f64_lossy(weights.lambda_cyc * weights.lambda_id));
    Ok(first.add(&terms.adv_s2r)?.add(&cyc)?.add(&id)?)
}

/// Overall generator loss from recorded component values.
pub fn total_generator_loss(bundle: &LossBundle, stage: Stage) -> Result<f64> {
    let w = LossWeights {
        lambda_cyc: bundle.lambda_cyc,
        lambda_id: bundle.lambda_id,
        alpha: bundle.alpha,
        gamma: bundle.gamma,
    };
    w.check()?;
    let first = match stage {
        Stage::B => bundle.g_adv_r2s,
        Stage::C => {
            let task = bundle
                .task
                .ok_or_else(|| Error::usage("stage C total needs the task component"))?;
            if w.alpha == 0.0 {
                bundle.g_adv_r2s
            } else {
                (1.0 - w.alpha) * bundle.g_adv_r2s + w.alpha * w.gamma * task
            }
        }
    };
    Ok(first + bundle.g_adv_s2r + w.lambda_cyc * bundle.cycle + w.lambda_cyc * w.lambda_id * bundle.identity)
}
