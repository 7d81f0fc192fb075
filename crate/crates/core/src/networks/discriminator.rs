use serde::{Deserialize, Serialize};
use tada_tensor::{Bound, ParamStore, Real, Tensor};

use super::{leaky, norm, ConvLayer, Init, LayerBuilder};
use crate::datamodel::Domain;
use crate::error::{Error, Result};
use crate::losses::DiscriminatorScores;

/// Patch scorer: `n_layers` 4x4 convolutions. The first halves the
/// resolution without normalization, the following ones are instance
/// normalized (the last two hidden layers keep stride 1) and the final
/// layer emits one unbounded score per patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorArch {
    pub image_channels: usize,
    pub base_width: usize,
    pub n_layers: usize,
}

impl Default for DiscriminatorArch {
    fn default() -> Self {
        Self {
            image_channels: 3,
            base_width: 8,
            n_layers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T: Real> {
    arch: DiscriminatorArch,
    domain: Domain,
    params: ParamStore<T>,
    hidden: Vec<ConvLayer>,
    out: ConvLayer,
}

impl<T: Real> Discriminator<T> {
    pub fn new(arch: DiscriminatorArch, domain: Domain, seed: u64) -> Result<Self> {
        if arch.n_layers < 2 || arch.base_width == 0 || arch.image_channels == 0 {
            return Err(Error::usage(format!("invalid discriminator architecture {arch:?}")));
        }
        let mut params = ParamStore::new();
        let mut b = LayerBuilder::new(&mut params, seed);
        let init = Init::Normal(0.02);
        let n_hidden = arch.n_layers - 1;
        let mut cin = arch.image_channels;
        let mut hidden = Vec::with_capacity(n_hidden);
        for i in 0..n_hidden {
            let cout = arch.base_width << i.min(3);
            let stride = if i == 0 || i + 1 < n_hidden { 2 } else { 1 };
            hidden.push(b.conv(&format!("conv{i}"), cin, cout, 4, stride, 1, i == 0, init));
            cin = cout;
        }
        let out = b.conv("score", cin, 1, 4, 1, 1, true, init);
        Ok(Self {
            arch,
            domain,
            params,
            hidden,
            out,
        })
    }

    pub fn arch(&self) -> &DiscriminatorArch {
        &self.arch
    }

    pub fn domain(&self) -> Domain {
        self.domain
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

    /// Per-patch realness scores of shape `(N, 1, h, w)`.
    pub fn forward(&self, p: &Bound<T>, x: &Tensor<T>) -> Result<DiscriminatorScores<T>> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.arch.image_channels {
            return Err(Error::usage(format!(
                "discriminator expects {} channels, got {c}",
                self.arch.image_channels
            )));
        }
        let mut h = x.clone();
        for (i, layer) in self.hidden.iter().enumerate() {
            h = layer.forward(p, &h)?;
            if i > 0 {
                h = norm(&h)?;
            }
            h = leaky(&h);
        }
        DiscriminatorScores::new(self.out.forward(p, &h)?)
    }

    pub fn score(&self, x: &Tensor<T>) -> Result<DiscriminatorScores<T>> {
        self.forward(&self.bind(false), x)
    }
}
