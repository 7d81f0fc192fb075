//! On-disk dataset layout.
//!
//! ```text
//! root/{real,synthetic}/{train,val}/
//!     images/<stem>.png      8-bit gray or RGB(A); alpha is dropped
//!     masks/<stem>.png       segmentation only: 8-bit gray class indices, 255 = ignore
//!     unlabeled.txt          segmentation only, optional: one stem per line without a mask
//!     labels.txt             classification only: "<stem> <class>" or "<stem> -" (unlabeled)
//! ```
//!
//! Pixel values `v` in `0..=255` map to `v / 127.5 - 1`. Blank lines and
//! lines starting with `#` are skipped in both text files. Samples are
//! ordered by stem.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::datamodel::{DatasetSplit, Domain, Image, Label, LabelMask, Sample, IGNORE};
use crate::error::{Error, Result};
use crate::networks::Head;

pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";
pub const LABELS_FILE: &str = "labels.txt";
pub const UNLABELED_FILE: &str = "unlabeled.txt";

pub fn split_dir(root: &Path, domain: Domain, split: &str) -> PathBuf {
    root.join(domain.to_string()).join(split)
}

pub fn to_byte(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn from_byte(b: u8) -> f32 {
    f32::from(b) / 127.5 - 1.0
}

pub fn decode_image_png(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::usage(format!("image decode: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::usage("image has no pixels"));
    }
    if img.color().channel_count() <= 2 {
        let g = img.to_luma8();
        Image::new(1, h, w, g.as_raw().iter().map(|&b| from_byte(b)).collect())
    } else {
        let rgb = img.to_rgb8();
        let raw = rgb.as_raw();
        let mut data = vec![0.0; 3 * h * w];
        for (i, px) in raw.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = from_byte(px[c]);
            }
        }
        Image::new(3, h, w, data)
    }
}

pub fn encode_image_png(img: &Image) -> Result<Vec<u8>> {
    let (c, h, w) = img.shape();
    let dynamic = match c {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w as u32, h as u32, img.data().iter().map(|&v| to_byte(v)).collect())
                .expect("buffer fits"),
        ),
        3 => {
            let mut raw = Vec::with_capacity(3 * h * w);
            for i in 0..h * w {
                for ch in 0..3 {
                    raw.push(to_byte(img.data()[ch * h * w + i]));
                }
            }
            DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer fits"))
        }
        _ => return Err(Error::usage(format!("cannot store a {c}-channel image as PNG"))),
    };
    let mut out = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::usage(format!("image encode: {e}")))?;
    Ok(out.into_inner())
}

/// Decode a single-channel mask, rejecting class ids `>= num_classes`
/// other than [`IGNORE`].
pub fn decode_mask_png(bytes: &[u8], num_classes: usize) -> Result<LabelMask> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::usage(format!("mask decode: {e}")))?;
    if img.color() != image::ColorType::L8 {
        return Err(Error::usage(format!(
            "mask must be 8-bit grayscale, got {:?}",
            img.color()
        )));
    }
    let g = img.to_luma8();
    if let Some(bad) = g.as_raw().iter().find(|&&v| v != IGNORE && v as usize >= num_classes) {
        return Err(Error::usage(format!(
            "mask holds unknown class id {bad} (C = {num_classes})"
        )));
    }
    LabelMask::new(g.height() as usize, g.width() as usize, g.into_raw())
}

pub fn encode_mask_png(m: &LabelMask) -> Result<Vec<u8>> {
    let g = GrayImage::from_raw(m.width() as u32, m.height() as u32, m.data().to_vec()).expect("buffer fits");
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma8(g)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::usage(format!("mask encode: {e}")))?;
    Ok(out.into_inner())
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parse a classification index into `stem -> class` (`None` = unlabeled).
pub fn parse_label_index(text: &str, num_classes: usize) -> Result<BTreeMap<String, Option<usize>>> {
    let mut out = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let mut parts = line.split_whitespace();
        let (Some(stem), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::usage(format!("line {n}: expected '<stem> <class>'")));
        };
        let class = if label == "-" {
            None
        } else {
            let c: usize = label
                .parse()
                .map_err(|_| Error::usage(format!("line {n}: bad class '{label}'")))?;
            if c >= num_classes {
                return Err(Error::usage(format!(
                    "line {n}: unknown class id {c} (C = {num_classes})"
                )));
            }
            Some(c)
        };
        if out.insert(stem.to_owned(), class).is_some() {
            return Err(Error::usage(format!("line {n}: duplicate stem {stem}")));
        }
    }
    Ok(out)
}

fn png_stems(dir: &Path) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_owned());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Load one `{train,val}` directory.
pub fn load_split_dir(dir: &Path, domain: Domain, task: Head, num_classes: usize) -> Result<DatasetSplit> {
    let images_dir = dir.join(IMAGES_DIR);
    if !images_dir.is_dir() {
        return Err(Error::load(&images_dir, "dataset directory not found"));
    }
    let stems = png_stems(&images_dir)?;
    if stems.is_empty() {
        return Err(Error::load(&images_dir, "no PNG images"));
    }
    let class_index = match task {
        Head::Classifier => {
            let p = dir.join(LABELS_FILE);
            let text = crate::io::read_string(&p)?;
            Some(parse_label_index(&text, num_classes).map_err(|e| Error::load(&p, e.to_string()))?)
        }
        Head::Segmenter => None,
    };
    let unlabeled: BTreeSet<String> = {
        let p = dir.join(UNLABELED_FILE);
        if p.exists() {
            content_lines(&crate::io::read_string(&p)?)
                .map(|(_, l)| l.to_owned())
                .collect()
        } else {
            BTreeSet::new()
        }
    };
    let mut samples = Vec::with_capacity(stems.len());
    for stem in &stems {
        let img_path = images_dir.join(format!("{stem}.png"));
        let image = decode_image_png(&read_file(&img_path)?).map_err(|e| Error::load(&img_path, e.to_string()))?;
        let label = match &class_index {
            Some(index) => match index.get(stem) {
                Some(c) => c.map(Label::Class),
                None => return Err(Error::load(dir.join(LABELS_FILE), format!("no entry for image {stem}"))),
            },
            None => {
                let mask_path = dir.join(MASKS_DIR).join(format!("{stem}.png"));
                if mask_path.exists() {
                    let m = decode_mask_png(&read_file(&mask_path)?, num_classes)
                        .map_err(|e| Error::load(&mask_path, e.to_string()))?;
                    if (m.height(), m.width()) != (image.height(), image.width()) {
                        return Err(Error::load(&mask_path, "mask size differs from its image"));
                    }
                    Some(Label::Mask(m))
                } else if unlabeled.contains(stem) {
                    None
                } else {
                    return Err(Error::load(&mask_path, "missing mask for a labeled image"));
                }
            }
        };
        samples.push(Sample { image, label, domain });
    }
    Ok(DatasetSplit::new(samples, num_classes))
}

pub fn load_directory_dataset(
    root: &Path,
    domain: Domain,
    split: &str,
    task: Head,
    num_classes: usize,
) -> Result<DatasetSplit> {
    load_split_dir(&split_dir(root, domain, split), domain, task, num_classes)
}

/// Write a split in the layout above, naming samples `000000`, `000001`, ...
pub fn save_split_dir(dir: &Path, split: &DatasetSplit) -> Result<()> {
    let images_dir = dir.join(IMAGES_DIR);
    crate::io::create_dir(&images_dir)?;
    let mut labels = String::new();
    let mut unlabeled = String::new();
    let mut any_mask = false;
    for (i, s) in split.samples().iter().enumerate() {
        let stem = format!("{i:06}");
        crate::io::write_atomic(&images_dir.join(format!("{stem}.png")), &encode_image_png(&s.image)?)?;
        match &s.label {
            Some(Label::Mask(m)) => {
                any_mask = true;
                crate::io::write_atomic(&dir.join(MASKS_DIR).join(format!("{stem}.png")), &encode_mask_png(m)?)?;
            }
            Some(Label::Class(c)) => labels.push_str(&format!("{stem} {c}\n")),
            None => {
                labels.push_str(&format!("{stem} -\n"));
                unlabeled.push_str(&format!("{stem}\n"));
            }
        }
    }
    let classification = split.samples().iter().any(|s| matches!(s.label, Some(Label::Class(_))));
    if classification {
        crate::io::write_string_atomic(&dir.join(LABELS_FILE), &labels)?;
    } else {
        if any_mask {
            crate::io::create_dir(&dir.join(MASKS_DIR))?;
        }
        if !unlabeled.is_empty() {
            crate::io::write_string_atomic(&dir.join(UNLABELED_FILE), &unlabeled)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy::{generate_toy_dataset, ToyWorldSpec};

    fn spec() -> ToyWorldSpec {
        ToyWorldSpec {
            height: 12,
            width: 12,
            seed: 2,
            ..ToyWorldSpec::default()
        }
    }

    #[test]
    fn segmentation_round_trip_within_storage_precision() {
        let dir = tempfile::tempdir().unwrap();
        let split = generate_toy_dataset(&spec(), 3, Domain::Real, Head::Segmenter).unwrap();
        save_split_dir(dir.path(), &split).unwrap();
        let back = load_split_dir(dir.path(), Domain::Real, Head::Segmenter, 4).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in split.samples().iter().zip(back.samples()) {
            assert_eq!(a.label, b.label);
            for (x, y) in a.image.data().iter().zip(b.image.data()) {
                assert!((x - y).abs() <= 1.0 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn unlabeled_entries_and_classification() {
        let dir = tempfile::tempdir().unwrap();
        let split = generate_toy_dataset(&spec(), 4, Domain::Synthetic, Head::Classifier).unwrap();
        let mut samples = split.samples().to_vec();
        samples[1].label = None;
        save_split_dir(dir.path(), &DatasetSplit::new(samples.clone(), 4)).unwrap();
        let back = load_split_dir(dir.path(), Domain::Synthetic, Head::Classifier, 4).unwrap();
        assert_eq!(back.num_labeled(), 3);
        assert_eq!(back.samples()[1].label, None);
        assert_eq!(back.samples()[2].label, samples[2].label);

        let seg = tempfile::tempdir().unwrap();
        let split = generate_toy_dataset(&spec(), 2, Domain::Real, Head::Segmenter).unwrap();
        let mut samples = split.samples().to_vec();
        samples[0].label = None;
        save_split_dir(seg.path(), &DatasetSplit::new(samples, 4)).unwrap();
        let back = load_split_dir(seg.path(), Domain::Real, Head::Segmenter, 4).unwrap();
        assert_eq!(back.num_labeled(), 1);
    }

    #[test]
    fn load_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let split = generate_toy_dataset(&spec(), 2, Domain::Real, Head::Segmenter).unwrap();
        save_split_dir(dir.path(), &split).unwrap();

        fs::remove_file(dir.path().join("masks/000001.png")).unwrap();
        let err = load_split_dir(dir.path(), Domain::Real, Head::Segmenter, 4).unwrap_err();
        assert!(err.to_string().contains("000001.png"), "{err}");

        fs::write(dir.path().join("images/000000.png"), b"not a png").unwrap();
        let err = load_split_dir(dir.path(), Domain::Real, Head::Segmenter, 4).unwrap_err();
        assert!(err.to_string().contains("000000.png"), "{err}");

        let missing = load_split_dir(&dir.path().join("nope"), Domain::Real, Head::Segmenter, 4).unwrap_err();
        assert!(missing.to_string().contains("nope"));
    }

    #[test]
    fn unknown_class_ids_are_rejected() {
        let m = LabelMask::new(2, 2, vec![0, 1, 4, 255]).unwrap();
        let bytes = encode_mask_png(&m).unwrap();
        assert!(decode_mask_png(&bytes, 4).is_err());
        assert_eq!(decode_mask_png(&bytes, 5).unwrap(), m);
        assert!(parse_label_index("a 4\n", 4).is_err());
        assert!(parse_label_index("a 1\na 2\n", 4).is_err());
        assert!(parse_label_index("a\n", 4).is_err());
        let ok = parse_label_index("# c\n\na 1\nb -\n", 4).unwrap();
        assert_eq!(ok.get("a"), Some(&Some(1)));
        assert_eq!(ok.get("b"), Some(&None));
    }
}
