use serde::{Deserialize, Serialize};
use tada_tensor::{Bound, ParamStore, Real, Tensor};

use super::{norm, ConvLayer, Init, LayerBuilder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    RealToSynthetic,
    SyntheticToReal,
}

/// Residual encoder-decoder: a full-resolution stem, `n_downsample` strided
/// convolutions, `n_residual` residual blocks, as many upsampling stages
/// and a full-resolution output convolution with `tanh`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResnetSpec {
    pub base_width: usize,
    pub n_downsample: usize,
    pub n_residual: usize,
    pub stem_kernel: usize,
    /// Add the stem features back before the output convolution.
    pub long_skip: bool,
}

impl Default for ResnetSpec {
    fn default() -> Self {
        Self {
            base_width: 8,
            n_downsample: 3,
            n_residual: 3,
            stem_kernel: 7,
            long_skip: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorBody {
    /// Returns its input unchanged (no parameters).
    Identity,
    Resnet(ResnetSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorArch {
    pub image_channels: usize,
    pub body: GeneratorBody,
}

impl GeneratorArch {
    /// Number of stride-2 stages; inputs must be divisible by `2^n`.
    pub fn downsampling(&self) -> usize {
        match self.body {
            GeneratorBody::Identity => 0,
            GeneratorBody::Resnet(s) => s.n_downsample,
        }
    }
}

impl Default for GeneratorArch {
    fn default() -> Self {
        Self {
            image_channels: 3,
            body: GeneratorBody::Resnet(ResnetSpec::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResnetLayers {
    stem: ConvLayer,
    down: Vec<ConvLayer>,
    res: Vec<(ConvLayer, ConvLayer)>,
    up: Vec<ConvLayer>,
    out: ConvLayer,
    long_skip: bool,
}

/// Image-to-image translator between the two domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T: Real> {
    arch: GeneratorArch,
    direction: Direction,
    params: ParamStore<T>,
    layers: Option<ResnetLayers>,
}

impl<T: Real> Generator<T> {
    pub fn new(arch: GeneratorArch, direction: Direction, seed: u64) -> Result<Self> {
        if arch.image_channels == 0 {
            return Err(Error::usage("generator needs at least one image channel"));
        }
        let mut params = ParamStore::new();
        let layers = match arch.body {
            GeneratorBody::Identity => None,
            GeneratorBody::Resnet(spec) => {
                if spec.base_width == 0 || spec.stem_kernel % 2 == 0 {
                    return Err(Error::usage(format!(
                        "generator needs a positive width and an odd stem kernel, got {spec:?}"
                    )));
                }
                let mut b = LayerBuilder::new(&mut params, seed);
                let init = Init::Normal(0.02);
                let w = spec.base_width;
                let k = spec.stem_kernel;
                let stem = b.conv("stem", arch.image_channels, w, k, 1, k / 2, false, init);
                let mut ch = w;
                let down = (0..spec.n_downsample)
                    .map(|i| {
                        let l = b.conv(&format!("down{i}"), ch, ch * 2, 3, 2, 1, false, init);
                        ch *= 2;
                        l
                    })
                    .collect();
                let res = (0..spec.n_residual)
                    .map(|i| {
                        (
                            b.conv(&format!("res{i}.a"), ch, ch, 3, 1, 1, false, init),
                            b.conv(&format!("res{i}.b"), ch, ch, 3, 1, 1, false, init),
                        )
                    })
                    .collect();
                let up = (0..spec.n_downsample)
                    .map(|i| {
                        let l = b.conv(&format!("up{i}"), ch, ch / 2, 3, 1, 1, false, init);
                        ch /= 2;
                        l
                    })
                    .collect();
                let out = b.conv("out", ch, arch.image_channels, k, 1, k / 2, true, init);
                Some(ResnetLayers {
                    stem,
                    down,
                    res,
                    up,
                    out,
                    long_skip: spec.long_skip,
                })
            }
        };
        Ok(Self {
            arch,
            direction,
            params,
            layers,
        })
    }

    /// Parameter-free generator that returns its input.
    pub fn identity(image_channels: usize, direction: Direction) -> Self {
        Self {
            arch: GeneratorArch {
                image_channels,
                body: GeneratorBody::Identity,
            },
            direction,
            params: ParamStore::new(),
            layers: None,
        }
    }

    pub fn arch(&self) -> &GeneratorArch {
        &self.arch
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn bind(&self, trainable: bool) -> Bound<T> {
        self.params.bind(trainable)
    }

    /// Translate an `(N, C, H, W)` batch. Output has the same shape, values
    /// in `[-1, 1]`.
    pub fn forward(&self, p: &Bound<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.arch.image_channels {
            return Err(Error::usage(format!(
                "generator expects {} channels, got {c}",
                self.arch.image_channels
            )));
        }
        let Some(l) = &self.layers else {
            return Ok(x.clone());
        };
        let factor = 1usize << l.down.len();
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::usage(format!(
                "generator input {h}x{w} must be divisible by {factor}"
            )));
        }
        let stem = norm(&l.stem.forward(p, x)?)?.relu();
        let mut h = stem.clone();
        for d in &l.down {
            h = norm(&d.forward(p, &h)?)?.relu();
        }
        for (a, b) in &l.res {
            let r = norm(&a.forward(p, &h)?)?.relu();
            let r = norm(&b.forward(p, &r)?)?;
            h = h.add(&r)?;
        }
        for u in &l.up {
            h = norm(&u.forward(p, &h.upsample_nearest(2)?)?)?.relu();
        }
        if l.long_skip {
            h = h.add(&stem)?;
        }
        Ok(l.out.forward(p, &h)?.tanh())
    }

    /// Inference with constant parameters.
    pub fn translate(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(&self.bind(false), x)
    }
}
