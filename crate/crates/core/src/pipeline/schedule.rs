/// `base * (1 - step / total)^power`, zero once `step >= total`.
pub fn poly_lr(base: f64, step: usize, total: usize, power: f64) -> f64 {
    if total == 0 || step >= total {
        return 0.0;
    }
    base * (1.0 - step as f64 / total as f64).powf(power)
}

/// Constant for the first `epochs - decay_epochs` epochs, then a linear
/// ramp that reaches zero after the last epoch.
pub fn linear_decay_lr(base: f64, epoch: usize, epochs: usize, decay_epochs: usize) -> f64 {
    let decay = decay_epochs.min(epochs);
    let flat = epochs - decay;
    if epoch < flat {
        return base;
    }
    base * (1.0 - (epoch - flat + 1) as f64 / (decay + 1) as f64)
}
