//! Geometric and photometric transforms applied to image/mask pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Image, LabelMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Bilinear for images, nearest neighbor for masks.
    Resize {
        height: usize,
        width: usize,
    },
    RandomCrop {
        height: usize,
        width: usize,
    },
    HFlip {
        p: f64,
    },
    /// `(x - mean) / sqrt(var)` per channel.
    Normalize {
        mean: Vec<f32>,
        var: Vec<f32>,
    },
}

/// Apply `ops` in order. The same random draws move image and mask, so
/// pixel correspondence is preserved.
pub fn preprocess(
    image: &Image,
    mask: Option<&LabelMask>,
    ops: &[Transform],
    seed: u64,
) -> Result<(Image, Option<LabelMask>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = image.clone();
    let mut mask = mask.cloned();
    if let Some(m) = &mask {
        if (m.height(), m.width()) != (img.height(), img.width()) {
            return Err(Error::usage("mask shape differs from image shape"));
        }
    }
    for op in ops {
        match op {
            Transform::Resize { height, width } => {
                img = resize_bilinear(&img, *height, *width)?;
                mask = mask.map(|m| resize_nearest(&m, *height, *width)).transpose()?;
            }
            Transform::RandomCrop { height, width } => {
                if *height > img.height() || *width > img.width() || *height == 0 || *width == 0 {
                    return Err(Error::usage(format!(
                        "crop {height}x{width} does not fit image {}x{}",
                        img.height(),
                        img.width()
                    )));
                }
                let y0 = rng.random_range(0..=img.height() - height);
                let x0 = rng.random_range(0..=img.width() - width);
                img = crop(&img, y0, x0, *height, *width);
                mask = mask.map(|m| crop_mask(&m, y0, x0, *height, *width));
            }
            Transform::HFlip { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::usage(format!("flip probability {p} outside [0, 1]")));
                }
                if rng.random_bool(*p) {
                    img = hflip(&img);
                    mask = mask.map(|m| hflip_mask(&m));
                }
            }
            Transform::Normalize { mean, var } => {
                img = normalize(&img, mean, var)?;
            }
        }
    }
    Ok((img, mask))
}

pub fn hflip(img: &Image) -> Image {
    let (c, h, w) = img.shape();
    let src = img.data();
    let mut data = vec![0.0; src.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                data[(ch * h + y) * w + x] = src[(ch * h + y) * w + (w - 1 - x)];
            }
        }
    }
    Image::new(c, h, w, data).expect("same shape")
}

pub fn hflip_mask(m: &LabelMask) -> LabelMask {
    let (h, w) = (m.height(), m.width());
    let data = (0..h * w).map(|i| m.get(i / w, w - 1 - i % w)).collect();
    LabelMask::new(h, w, data).expect("same shape")
}

fn crop(img: &Image, y0: usize, x0: usize, h: usize, w: usize) -> Image {
    let c = img.channels();
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                data.push(img.get(ch, y0 + y, x0 + x));
            }
        }
    }
    Image::new(c, h, w, data).expect("crop shape")
}

fn crop_mask(m: &LabelMask, y0: usize, x0: usize, h: usize, w: usize) -> LabelMask {
    let data = (0..h * w).map(|i| m.get(y0 + i / w, x0 + i % w)).collect();
    LabelMask::new(h, w, data).expect("crop shape")
}

/// Align-corners-free bilinear resampling (pixel centers map onto pixel
/// centers). Identity when the size is unchanged.
pub fn resize_bilinear(img: &Image, height: usize, width: usize) -> Result<Image> {
    let (c, h, w) = img.shape();
    if height == 0 || width == 0 {
        return Err(Error::usage("resize target must be nonempty"));
    }
    if (height, width) == (h, w) {
        return Ok(img.clone());
    }
    let src_coord = |dst: usize, dst_len: usize, src_len: usize| -> (usize, usize, f32) {
        let s = ((dst as f32 + 0.5) * src_len as f32 / dst_len as f32 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(src_len - 1);
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f32)
    };
    let mut data = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        for y in 0..height {
            let (y0, y1, fy) = src_coord(y, height, h);
            for x in 0..width {
                let (x0, x1, fx) = src_coord(x, width, w);
                let top = img.get(ch, y0, x0) * (1.0 - fx) + img.get(ch, y0, x1) * fx;
                let bottom = img.get(ch, y1, x0) * (1.0 - fx) + img.get(ch, y1, x1) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Image::new(c, height, width, data)
}

pub fn resize_nearest(m: &LabelMask, height: usize, width: usize) -> Result<LabelMask> {
    if height == 0 || width == 0 {
        return Err(Error::usage("resize target must be nonempty"));
    }
    let (h, w) = (m.height(), m.width());
    let data = (0..height * width)
        .map(|i| {
            let y = ((i / width) * h) / height;
            let x = ((i % width) * w) / width;
            m.get(y, x)
        })
        .collect();
    LabelMask::new(height, width, data)
}

fn check_stats(img: &Image, mean: &[f32], var: &[f32]) -> Result<()> {
    let c = img.channels();
    if mean.len() != c || var.len() != c || var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::usage(format!(
            "normalization needs {c} means and positive variances"
        )));
    }
    Ok(())
}

pub fn normalize(img: &Image, mean: &[f32], var: &[f32]) -> Result<Image> {
    check_stats(img, mean, var)?;
    map_channels(img, |c, v| (v - mean[c]) / var[c].sqrt())
}

pub fn denormalize(img: &Image, mean: &[f32], var: &[f32]) -> Result<Image> {
    check_stats(img, mean, var)?;
    map_channels(img, |c, v| v * var[c].sqrt() + mean[c])
}

fn map_channels(img: &Image, f: impl Fn(usize, f32) -> f32) -> Result<Image> {
    let (c, h, w) = img.shape();
    let data = img.data().iter().enumerate().map(|(i, &v)| f(i / (h * w), v)).collect();
    Image::new(c, h, w, data)
}
