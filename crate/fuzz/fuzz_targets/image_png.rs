#![no_main]

use libfuzzer_sys::fuzz_target;
use tada::data::directory::{decode_image_png, encode_image_png};

fuzz_target!(|data: &[u8]| {
    // Guard against decompression bombs dominating the run.
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(img) = decode_image_png(data) {
        assert!(img.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let again = decode_image_png(&encode_image_png(&img).expect("encode")).expect("decode");
        assert_eq!(again, img);
    }
});
