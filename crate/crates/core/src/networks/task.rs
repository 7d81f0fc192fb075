use serde::{Deserialize, Serialize};
use tada_tensor::{Bound, ParamStore, Real, Tensor};

use super::{ConvLayer, Init, LayerBuilder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Classifier,
    Segmenter,
}

/// Fully convolutional task network.
///
/// The segmenter keeps full resolution (`depth` 3x3 convolutions) and ends
/// in a 1x1 class projection. The classifier halves the resolution at every
/// layer and averages the class map globally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskArch {
    pub image_channels: usize,
    pub num_classes: usize,
    pub head: Head,
    pub width: usize,
    pub depth: usize,
}

impl TaskArch {
    pub fn segmenter(num_classes: usize) -> Self {
        Self {
            image_channels: 3,
            num_classes,
            head: Head::Segmenter,
            width: 16,
            depth: 3,
        }
    }

    pub fn classifier(num_classes: usize) -> Self {
        Self {
            image_channels: 3,
            num_classes,
            head: Head::Classifier,
            width: 16,
            depth: 3,
        }
    }
}

/// Per-channel input standardization derived from the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNetwork<T: Real> {
    arch: TaskArch,
    params: ParamStore<T>,
    layers: Vec<ConvLayer>,
    head: ConvLayer,
    normalization: Normalization,
    frozen: bool,
}

impl<T: Real> TaskNetwork<T> {
    pub fn new(arch: TaskArch, seed: u64) -> Result<Self> {
        if arch.num_classes == 0 || arch.width == 0 || arch.image_channels == 0 {
            return Err(Error::usage(format!("invalid task network architecture {arch:?}")));
        }
        let mut params = ParamStore::new();
        let mut b = LayerBuilder::new(&mut params, seed);
        let stride = match arch.head {
            Head::Segmenter => 1,
            Head::Classifier => 2,
        };
        let mut cin = arch.image_channels;
        let layers = (0..arch.depth)
            .map(|i| {
                let l = b.conv(&format!("conv{i}"), cin, arch.width, 3, stride, 1, true, Init::Kaiming);
                cin = arch.width;
                l
            })
            .collect();
        let head = b.conv("classes", cin, arch.num_classes, 1, 1, 0, true, Init::Kaiming);
        Ok(Self {
            arch,
            params,
            layers,
            head,
            normalization: Normalization::identity(arch.image_channels),
            frozen: false,
        })
    }

    pub fn arch(&self) -> &TaskArch {
        &self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    /// Mutable access for optimizers; refused once frozen.
    pub fn params_mut(&mut self) -> Result<&mut ParamStore<T>> {
        if self.frozen {
            return Err(Error::usage("task network is frozen"));
        }
        Ok(&mut self.params)
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn set_normalization(&mut self, normalization: Normalization) -> Result<()> {
        let c = self.arch.image_channels;
        if normalization.mean.len() != c
            || normalization.std.len() != c
            || normalization.std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || normalization.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::usage(format!("invalid normalization for {c} channels")));
        }
        self.normalization = normalization;
        Ok(())
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Freeze all parameters. Idempotent.
    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    /// Parameters as graph leaves; constants when frozen.
    pub fn bind(&self) -> Bound<T> {
        self.params.bind(!self.frozen)
    }

    /// Logits `(N, C)` for the classifier, `(N, C, H, W)` for the segmenter.
    pub fn forward(&self, p: &Bound<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.arch.image_channels {
            return Err(Error::usage(format!(
                "task network expects {} channels, got {c}",
                self.arch.image_channels
            )));
        }
        let scale: Vec<T> = self
            .normalization
            .std
            .iter()
            .map(|&s| T::from_f64_lossy(1.0 / f64::from(s)))
            .collect();
        let shift: Vec<T> = self
            .normalization
            .mean
            .iter()
            .zip(&self.normalization.std)
            .map(|(&m, &s)| T::from_f64_lossy(-f64::from(m) / f64::from(s)))
            .collect();
        let mut h = x.channel_affine(&scale, &shift)?;
        for l in &self.layers {
            h = l.forward(p, &h)?.relu();
        }
        let logits = self.head.forward(p, &h)?;
        match self.arch.head {
            Head::Segmenter => Ok(logits),
            Head::Classifier => Ok(logits.global_avg_pool()?),
        }
    }

    /// Inference with constant parameters.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(&self.params.bind(false), x)
    }

    /// Arg-max class per sample (classifier) or per pixel (segmenter).
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_dim1()?)
    }
}
