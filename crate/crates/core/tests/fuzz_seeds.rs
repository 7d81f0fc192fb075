//! The checked-in fuzz corpus doubles as a set of known-good inputs for
//! every decoder.

use std::path::PathBuf;

use tada::config::ExperimentConfig;
use tada::data::directory::{decode_image_png, decode_mask_png, parse_label_index};
use tada::metrics::parse_records;
use tada::networks::{Checkpoint, TensorArchive};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn archive_and_checkpoint_seeds_decode() {
    for (name, bytes) in seeds("archive_decode") {
        TensorArchive::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("checkpoint_decode") {
        Checkpoint::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn text_seeds_parse() {
    for (name, bytes) in seeds("metric_records") {
        parse_records(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("config_toml") {
        ExperimentConfig::from_toml(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let mut ok = 0;
    for (_, bytes) in seeds("label_index") {
        let c = usize::from(bytes[0]);
        ok += usize::from(parse_label_index(std::str::from_utf8(&bytes[1..]).unwrap(), c).is_ok());
    }
    // The corpus holds valid and invalid indexes alike.
    assert!(ok >= 1);
}

#[test]
fn png_seeds_decode() {
    for (name, bytes) in seeds("image_png") {
        decode_image_png(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("mask_png") {
        let c = usize::from(bytes[0] % 16) + 1;
        decode_mask_png(&bytes[1..], c).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
