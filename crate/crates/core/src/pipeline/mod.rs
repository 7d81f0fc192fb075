//! Training stages and baselines: the synthetic expert, task-agnostic
//! translation, task-aware fine-tuning and the comparison baselines.

pub mod gan;
pub mod pool;
pub mod schedule;
pub mod task;

pub use gan::{
    train_gan, BestRecord, EpochLosses, EvalPoint, GanConfig, GanData, GanHooks, GanOutcome, GanPlan, GanState,
    LabeledBatch,
};
pub use pool::ImagePool;
pub use schedule::{linear_decay_lr, poly_lr};
pub use task::{evaluate, train_task_network, EpochRecord, TaskTrainConfig, TaskTrainOutcome};

/// Derive an independent 64-bit seed from a base seed and a path of tags.
pub fn seed_for(seed: u64, tags: &[u64]) -> u64 {
    let mut z = seed;
    for &t in tags {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(t.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
