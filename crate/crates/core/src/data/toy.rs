//! Procedural two-domain scenes.
//!
//! A scene is a background plus a few objects. Class 1 objects are discs,
//! every higher class is an axis-aligned rectangle, so that apart from class
//! 1 only appearance separates the classes. Each domain renders the same
//! scene with its own [`DomainStyle`]: a per-class palette, per-object color
//! jitter, an oriented sinusoidal texture and pixel noise.
//!
//! The scene for index `i` depends only on `(seed, i)`, rendering noise also
//! on the domain, hence both domains agree on masks for one seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{DatasetSplit, Domain, Image, Label, LabelMask, Sample};
use crate::error::{Error, Result};
use crate::networks::Head;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Flat,
    Stripes,
    Checker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainStyle {
    /// RGB color per class in `[-1, 1]`; entry 0 is the background.
    pub palette: Vec<[f32; 3]>,
    /// Standard deviation of independent per-pixel noise.
    pub noise_amplitude: f32,
    /// Spatial frequency of the texture in cycles per 48 pixels.
    pub texture_frequency: f32,
    pub texture_amplitude: f32,
    /// Half-width of the uniform per-object color offset.
    pub color_jitter: f32,
    pub background: Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyWorldSpec {
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub synthetic: DomainStyle,
    pub real: DomainStyle,
}

impl Default for ToyWorldSpec {
    /// Four classes at 48x48. The real palette of classes 2 and 3 sits next
    /// to the synthetic colors of classes 3 and 2, so a translator that only
    /// matches appearance statistics tends to swap the two classes.
    fn default() -> Self {
        Self {
            num_classes: 4,
            height: 48,
            width: 48,
            seed: 0,
            min_objects: 2,
            max_objects: 4,
            synthetic: DomainStyle {
                palette: vec![
                    [-0.6, -0.6, -0.6],
                    [-0.8, -0.2, 0.9],
                    [0.9, -0.7, -0.7],
                    [-0.7, 0.9, -0.7],
                ],
                noise_amplitude: 0.05,
                texture_frequency: 0.0,
                texture_amplitude: 0.0,
                color_jitter: 0.1,
                background: Background::Flat,
            },
            real: DomainStyle {
                palette: vec![
                    [0.25, -0.1, -0.45],
                    [0.75, 0.7, 0.3],
                    [-0.25, 0.75, -0.2],
                    [0.75, -0.25, -0.1],
                ],
                noise_amplitude: 0.12,
                texture_frequency: 6.0,
                texture_amplitude: 0.25,
                color_jitter: 0.15,
                background: Background::Stripes,
            },
        }
    }
}

impl ToyWorldSpec {
    pub fn style(&self, domain: Domain) -> &DomainStyle {
        match domain {
            Domain::Real => &self.real,
            Domain::Synthetic => &self.synthetic,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::usage(format!(
                "toy world needs at least 2 classes (background plus one object class), got {}",
                self.num_classes
            )));
        }
        if self.num_classes > 255 {
            return Err(Error::usage("toy world supports at most 255 classes"));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::usage("toy images must be at least 8x8"));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::usage("toy world needs 1 <= min_objects <= max_objects"));
        }
        for (name, s) in [("synthetic", &self.synthetic), ("real", &self.real)] {
            if s.palette.len() != self.num_classes {
                return Err(Error::usage(format!(
                    "{name} palette has {} colors for {} classes",
                    s.palette.len(),
                    self.num_classes
                )));
            }
            let scalars = [
                s.noise_amplitude,
                s.texture_frequency,
                s.texture_amplitude,
                s.color_jitter,
            ];
            if scalars.iter().any(|v| !(v.is_finite() && *v >= 0.0))
                || s.palette.iter().flatten().any(|v| !(-1.0..=1.0).contains(v))
            {
                return Err(Error::usage(format!("{name} style holds out-of-range values")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Object {
    class: usize,
    cy: f32,
    cx: f32,
    /// Disc radius, or rectangle half-height.
    a: f32,
    /// Rectangle half-width (unused for discs).
    b: f32,
}

impl Object {
    fn covers(&self, y: f32, x: f32) -> bool {
        if self.class == 1 {
            (y - self.cy).powi(2) + (x - self.cx).powi(2) <= self.a * self.a
        } else {
            (y - self.cy).abs() <= self.a && (x - self.cx).abs() <= self.b
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // SplitMix64 finalizer over the combined inputs.
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn scene(spec: &ToyWorldSpec, index: usize, task: Head) -> Vec<Object> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, index as u64, 0));
    let (h, w) = (spec.height as f32, spec.width as f32);
    let s = h.min(w);
    let object_classes = spec.num_classes - 1;
    match task {
        Head::Classifier => {
            // One centered-ish object; class 0 is a class like any other.
            let class = index % spec.num_classes;
            let a = rng.random_range(0.2 * s..0.32 * s);
            let b = rng.random_range(0.2 * s..0.32 * s);
            vec![Object {
                class,
                cy: h / 2.0 + rng.random_range(-0.1 * s..0.1 * s),
                cx: w / 2.0 + rng.random_range(-0.1 * s..0.1 * s),
                a,
                b,
            }]
        }
        Head::Segmenter => {
            let n = rng.random_range(spec.min_objects..=spec.max_objects);
            // Cycling through classes from a random offset keeps the class
            // frequencies balanced.
            let first = rng.random_range(0..object_classes);
            (0..n)
                .map(|k| {
                    let class = 1 + (first + k) % object_classes;
                    let a = rng.random_range(0.1 * s..0.2 * s);
                    let b = rng.random_range(0.1 * s..0.2 * s);
                    Object {
                        class,
                        cy: rng.random_range(a..h - a),
                        cx: rng.random_range(b..w - b),
                        a,
                        b,
                    }
                })
                .collect()
        }
    }
}

/// Class of each pixel; later objects cover earlier ones.
fn rasterize(spec: &ToyWorldSpec, objects: &[Object]) -> Vec<u8> {
    let mut mask = vec![0u8; spec.height * spec.width];
    for (i, m) in mask.iter_mut().enumerate() {
        let y = (i / spec.width) as f32 + 0.5;
        let x = (i % spec.width) as f32 + 0.5;
        for o in objects {
            if o.covers(y, x) {
                *m = o.class as u8;
            }
        }
    }
    mask
}

fn render(spec: &ToyWorldSpec, domain: Domain, index: usize, objects: &[Object], owner: &[u8]) -> Image {
    let style = spec.style(domain);
    let tag = match domain {
        Domain::Real => 1,
        Domain::Synthetic => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, index as u64, tag));
    let (h, w) = (spec.height, spec.width);
    let n_regions = objects.len() + 1;
    // Region 0 is the background, region k the k-th object.
    let jitter: Vec<[f32; 3]> = (0..n_regions)
        .map(|_| {
            let j = style.color_jitter;
            let mut c = [0.0; 3];
            if j > 0.0 {
                for v in &mut c {
                    *v = rng.random_range(-j..=j);
                }
            }
            c
        })
        .collect();
    let theta = rng.random_range(0.0..std::f32::consts::PI);
    let phase = rng.random_range(0.0..std::f32::consts::TAU);
    let (st, ct) = theta.sin_cos();
    let freq = style.texture_frequency * std::f32::consts::TAU / 48.0;
    let noise = Normal::new(0.0, f64::from(style.noise_amplitude)).expect("finite noise amplitude");

    let mut region = vec![0usize; h * w];
    for (i, r) in region.iter_mut().enumerate() {
        let y = (i / w) as f32 + 0.5;
        let x = (i % w) as f32 + 0.5;
        for (k, o) in objects.iter().enumerate() {
            if o.covers(y, x) {
                *r = k + 1;
            }
        }
    }
    let mut data = vec![0.0f32; 3 * h * w];
    for i in 0..h * w {
        let (y, x) = ((i / w) as f32, (i % w) as f32);
        let class = owner[i] as usize;
        let base = style.palette[class];
        let tex = if style.texture_amplitude > 0.0 {
            let u = freq * (x * ct + y * st) + phase;
            let pattern = match (style.background, region[i]) {
                (Background::Checker, 0) => {
                    let v = freq * (x * st - y * ct);
                    u.sin().signum() * v.sin().signum()
                }
                (Background::Stripes, 0) => u.sin().signum(),
                _ => u.sin(),
            };
            style.texture_amplitude * pattern
        } else {
            0.0
        };
        for c in 0..3 {
            let n = if style.noise_amplitude > 0.0 {
                noise.sample(&mut rng) as f32
            } else {
                0.0
            };
            let v = base[c] + jitter[region[i]][c] + tex + n;
            data[c * h * w + i] = v.clamp(-1.0, 1.0);
        }
    }
    Image::new(3, h, w, data).expect("rendered image is finite")
}

/// Render `n` scenes in one domain. Deterministic given the spec.
pub fn generate_toy_dataset(spec: &ToyWorldSpec, n: usize, domain: Domain, task: Head) -> Result<DatasetSplit> {
    spec.check()?;
    if n == 0 {
        return Err(Error::usage("toy dataset needs at least one sample"));
    }
    let samples = (0..n)
        .map(|i| {
            let objects = scene(spec, i, task);
            let owner = rasterize(spec, &objects);
            let image = render(spec, domain, i, &objects, &owner);
            let label = match task {
                Head::Segmenter => Label::Mask(LabelMask::new(spec.height, spec.width, owner)?),
                Head::Classifier => Label::Class(objects[0].class),
            };
            Ok(Sample {
                image,
                label: Some(label),
                domain,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetSplit::new(samples, spec.num_classes))
}
