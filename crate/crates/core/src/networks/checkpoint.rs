//! Per-model checkpoints stored as a [`TensorArchive`].
//!
//! The archive metadata holds a [`CheckpointMeta`] (architecture spec,
//! normalization constants, stage, epoch and seed); the tensors are the
//! model parameters in construction order. Loading rebuilds the model from
//! the stored architecture and only then accepts the parameters, so a file
//! whose arrays disagree with its declared architecture is rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tada_tensor::{Param, ParamStore, Real};

use super::{
    Direction, Discriminator, DiscriminatorArch, Generator, GeneratorArch, Normalization, TaskArch, TaskNetwork,
    TensorArchive,
};
use crate::datamodel::Domain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelArch {
    Generator { arch: GeneratorArch, direction: Direction },
    Discriminator { arch: DiscriminatorArch, domain: Domain },
    Task { arch: TaskArch },
}

impl ModelArch {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelArch::Generator { .. } => "generator",
            ModelArch::Discriminator { .. } => "discriminator",
            ModelArch::Task { .. } => "task network",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub arch: ModelArch,
    /// Input standardization of task networks.
    pub normalization: Option<Normalization>,
    pub frozen: bool,
    /// Free-form stage tag, e.g. `"A"`, `"B"`, `"C"`, `"M3"`.
    pub stage: String,
    pub epoch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<Param<f32>>,
}

fn to_f32<T: Real>(store: &ParamStore<T>) -> Vec<Param<f32>> {
    store
        .params()
        .iter()
        .map(|p| Param {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: p.data.iter().map(|v| v.to_f64_lossy() as f32).collect(),
        })
        .collect()
}

fn from_f32<T: Real>(params: &[Param<f32>]) -> Vec<Param<T>> {
    params
        .iter()
        .map(|p| Param {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: p.data.iter().map(|&v| T::from_f64_lossy(f64::from(v))).collect(),
        })
        .collect()
}

fn arch_error(expected: &str, found: &ModelArch) -> Error {
    Error::Checkpoint(format!("expected a {expected} checkpoint, found a {}", found.kind()))
}

fn load_into<T: Real>(store: &mut ParamStore<T>, params: &[Param<f32>]) -> Result<()> {
    store
        .load(from_f32(params))
        .map_err(|e| Error::Checkpoint(format!("parameters do not match the stored architecture: {e}")))
}

impl Checkpoint {
    pub fn of_generator<T: Real>(g: &Generator<T>, stage: &str, epoch: usize, seed: u64) -> Self {
        Self {
            meta: CheckpointMeta {
                arch: ModelArch::Generator {
                    arch: *g.arch(),
                    direction: g.direction(),
                },
                normalization: None,
                frozen: false,
                stage: stage.to_owned(),
                epoch,
                seed,
            },
            params: to_f32(g.params()),
        }
    }

    pub fn of_discriminator<T: Real>(d: &Discriminator<T>, stage: &str, epoch: usize, seed: u64) -> Self {
        Self {
            meta: CheckpointMeta {
                arch: ModelArch::Discriminator {
                    arch: *d.arch(),
                    domain: d.domain(),
                },
                normalization: None,
                frozen: false,
                stage: stage.to_owned(),
                epoch,
                seed,
            },
            params: to_f32(d.params()),
        }
    }

    pub fn of_task<T: Real>(f: &TaskNetwork<T>, stage: &str, epoch: usize, seed: u64) -> Self {
        Self {
            meta: CheckpointMeta {
                arch: ModelArch::Task { arch: *f.arch() },
                normalization: Some(f.normalization().clone()),
                frozen: f.is_frozen(),
                stage: stage.to_owned(),
                epoch,
                seed,
            },
            params: to_f32(f.params()),
        }
    }

    pub fn generator<T: Real>(&self) -> Result<Generator<T>> {
        let ModelArch::Generator { arch, direction } = self.meta.arch else {
            return Err(arch_error("generator", &self.meta.arch));
        };
        let mut g = Generator::new(arch, direction, 0)?;
        load_into(g.params_mut(), &self.params)?;
        Ok(g)
    }

    pub fn discriminator<T: Real>(&self) -> Result<Discriminator<T>> {
        let ModelArch::Discriminator { arch, domain } = self.meta.arch else {
            return Err(arch_error("discriminator", &self.meta.arch));
        };
        let mut d = Discriminator::new(arch, domain, 0)?;
        load_into(d.params_mut(), &self.params)?;
        Ok(d)
    }

    /// Rebuilds the task network; frozen again if it was stored frozen.
    pub fn task<T: Real>(&self) -> Result<TaskNetwork<T>> {
        let ModelArch::Task { arch } = self.meta.arch else {
            return Err(arch_error("task network", &self.meta.arch));
        };
        let mut f = TaskNetwork::new(arch, 0)?;
        load_into(f.params_mut()?, &self.params)?;
        if let Some(n) = &self.meta.normalization {
            f.set_normalization(n.clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(if self.meta.frozen { f.freeze() } else { f })
    }

    pub fn to_archive(&self) -> Result<TensorArchive> {
        let meta =
            serde_json::to_value(&self.meta).map_err(|e| Error::Checkpoint(format!("metadata serialization: {e}")))?;
        let mut a = TensorArchive::new(serde_json::json!({ "checkpoint": meta }));
        for p in &self.params {
            a.push(p.name.clone(), &p.shape, p.data.clone());
        }
        Ok(a)
    }

    pub fn from_archive(a: TensorArchive) -> Result<Self> {
        let meta = a
            .meta
            .get("checkpoint")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("archive holds no checkpoint metadata".into()))?;
        let meta: CheckpointMeta =
            serde_json::from_value(meta).map_err(|e| Error::Checkpoint(format!("checkpoint metadata: {e}")))?;
        let params = a
            .tensors
            .into_iter()
            .map(|t| Param {
                name: t.name,
                shape: t.shape,
                data: t.data,
            })
            .collect();
        Ok(Self { meta, params })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_archive(TensorArchive::decode(bytes)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_archive()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_archive(TensorArchive::read(path)?).map_err(|e| Error::load(path, e.to_string()))
    }
}
