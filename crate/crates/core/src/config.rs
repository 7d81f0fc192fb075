//! Declarative experiment configuration (TOML) and the built-in presets.
//!
//! Unknown keys are rejected everywhere so that a typo in a sweep value
//! fails loudly instead of silently falling back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SubsetSize, ToyWorldSpec};
use crate::error::{Error, Result};
use crate::io;
use crate::losses::{check_alpha, LossWeights};
use crate::networks::{DiscriminatorArch, GeneratorArch, Head, TaskArch};
use crate::pipeline::{GanConfig, TaskTrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub task: Head,
    pub seed: u64,
    /// Parent directory of the run directory.
    pub output_root: PathBuf,
    pub data: DataConfig,
    pub networks: NetworksConfig,
    pub stage_a: TaskTrainConfig,
    pub stage_b: GanConfig,
    pub stage_c: StageCConfig,
    /// Supervised real-data baseline trained on the stage C labeled subset.
    pub m3: TaskTrainConfig,
    pub sweep: SweepConfig,
    pub evaluate: EvaluateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Procedurally rendered world. Split `k` (synthetic train, synthetic
    /// val, real train, real val) uses world seed `world.seed + k + 1`.
    Toy {
        world: ToyWorldSpec,
        synthetic_train: usize,
        synthetic_val: usize,
        real_train: usize,
        real_val: usize,
    },
    /// Images on disk in the `root/{real,synthetic}/{train,val}` layout.
    Directory { root: PathBuf, num_classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworksConfig {
    pub task: TaskArch,
    pub generator: GeneratorArch,
    pub discriminator: DiscriminatorArch,
}

/// What one stage C epoch iterates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochBasis {
    /// One pass over the labeled subset.
    Labeled,
    /// As many steps as one pass over the full real training split.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageCConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub labeled: SubsetSize,
    pub subset_seed: u64,
    pub epoch_basis: EpochBasis,
    pub epochs: usize,
    pub decay_epochs: usize,
    pub eval_every: usize,
}

impl Default for StageCConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            gamma: 1.0,
            labeled: SubsetSize::Fraction(0.05),
            subset_seed: 0,
            epoch_basis: EpochBasis::Labeled,
            epochs: 50,
            decay_epochs: 25,
            eval_every: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Replicate seeds; each picks its own labeled subset and training seed.
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            fractions: vec![0.005, 0.01, 0.05, 0.1],
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub batch_size: usize,
    /// Input sizes `[height, width]` for the resolution sweep; empty skips it.
    pub resolutions: Vec<[usize; 2]>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            resolutions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    ToySeg,
    ToyCls,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy-seg" => Ok(Preset::ToySeg),
            "toy-cls" => Ok(Preset::ToyCls),
            other => Err(Error::usage(format!(
                "unknown preset {other:?} (expected toy-seg or toy-cls)"
            ))),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::ToySeg => toy_seg(),
            Preset::ToyCls => toy_cls(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&io::read_string(path)?).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_root.join(&self.run_id)
    }

    pub fn num_classes(&self) -> usize {
        match &self.data {
            DataConfig::Toy { world, .. } => world.num_classes,
            DataConfig::Directory { num_classes, .. } => *num_classes,
        }
    }

    pub fn stage_c_weights(&self) -> LossWeights {
        LossWeights {
            lambda_cyc: self.stage_b.lambda_cyc,
            lambda_id: self.stage_b.lambda_id,
            alpha: self.stage_c.alpha,
            gamma: self.stage_c.gamma,
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            || self.run_id.starts_with('.')
        {
            return bad(format!("run_id {:?} must be a plain file name", self.run_id));
        }
        match &self.data {
            DataConfig::Toy {
                world,
                synthetic_train,
                synthetic_val,
                real_train,
                real_val,
            } => {
                world.check().map_err(|e| Error::Config(e.to_string()))?;
                if [synthetic_train, synthetic_val, real_train, real_val]
                    .iter()
                    .any(|&&n| n == 0)
                {
                    return bad("toy split sizes must be positive".into());
                }
            }
            DataConfig::Directory { num_classes, .. } => {
                if !(2..=255).contains(num_classes) {
                    return bad(format!("num_classes must lie in 2..=255, got {num_classes}"));
                }
            }
        }
        let t = &self.networks.task;
        if t.head != self.task {
            return bad(format!(
                "networks.task.head is {:?} but the task is {:?}",
                t.head, self.task
            ));
        }
        if t.num_classes != self.num_classes() {
            return bad(format!(
                "networks.task.num_classes is {} but the data has {} classes",
                t.num_classes,
                self.num_classes()
            ));
        }
        self.stage_a.check()?;
        self.m3.check()?;
        self.stage_b.check()?;
        if self.stage_b.decay_epochs > self.stage_b.epochs {
            return bad("stage_b.decay_epochs exceeds stage_b.epochs".into());
        }
        let c = &self.stage_c;
        check_alpha(c.alpha).map_err(|e| Error::Config(e.to_string()))?;
        self.stage_c_weights()
            .check()
            .map_err(|e| Error::Config(e.to_string()))?;
        if c.eval_every == 0 || c.decay_epochs > c.epochs {
            return bad("stage_c needs eval_every > 0 and decay_epochs <= epochs".into());
        }
        if let SubsetSize::Fraction(f) = c.labeled {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("stage_c.labeled fraction {f} outside (0, 1]"));
            }
        }
        for &a in &self.sweep.alphas {
            check_alpha(a).map_err(|e| Error::Config(format!("sweep.alphas: {e}")))?;
        }
        if let Some(f) = self.sweep.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("sweep.fractions entry {f} outside (0, 1]"));
        }
        if self.evaluate.batch_size == 0 {
            return bad("evaluate.batch_size must be positive".into());
        }
        let divisor = 1usize << self.networks.generator.downsampling();
        for r in &self.evaluate.resolutions {
            if r[0] == 0 || r[1] == 0 || r[0] % divisor != 0 || r[1] % divisor != 0 {
                return bad(format!(
                    "resolution {}x{} must be a positive multiple of {divisor}",
                    r[0], r[1]
                ));
            }
        }
        Ok(())
    }
}

fn toy_seg() -> ExperimentConfig {
    let world = ToyWorldSpec::default();
    ExperimentConfig {
        run_id: "toy-seg".into(),
        task: Head::Segmenter,
        seed: 0,
        output_root: PathBuf::from("runs"),
        networks: NetworksConfig {
            task: TaskArch::segmenter(world.num_classes),
            generator: GeneratorArch::default(),
            discriminator: DiscriminatorArch::default(),
        },
        data: DataConfig::Toy {
            world,
            synthetic_train: 500,
            synthetic_val: 100,
            real_train: 200,
            real_val: 100,
        },
        stage_a: TaskTrainConfig {
            epochs: 10,
            ..TaskTrainConfig::default()
        },
        stage_b: GanConfig {
            epochs: 5,
            decay_epochs: 2,
            ..GanConfig::default()
        },
        stage_c: StageCConfig {
            alpha: 0.8,
            gamma: 10.0,
            epochs: 30,
            decay_epochs: 15,
            ..StageCConfig::default()
        },
        m3: TaskTrainConfig {
            epochs: 20,
            min_steps: 300,
            ..TaskTrainConfig::default()
        },
        sweep: SweepConfig {
            alphas: vec![0.0, 0.5, 0.8, 0.9, 1.0],
            fractions: vec![0.01, 0.05, 0.25],
            seeds: vec![0, 1, 2],
        },
        evaluate: EvaluateConfig {
            batch_size: 16,
            resolutions: vec![[32, 32], [48, 48], [64, 64]],
        },
    }
}

fn toy_cls() -> ExperimentConfig {
    let mut cfg = toy_seg();
    cfg.run_id = "toy-cls".into();
    cfg.task = Head::Classifier;
    cfg.networks.task = TaskArch::classifier(cfg.num_classes());
    cfg.stage_a.epochs = 15;
    cfg
}
