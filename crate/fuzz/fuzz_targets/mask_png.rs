#![no_main]

use libfuzzer_sys::fuzz_target;
use tada::data::directory::decode_mask_png;
use tada::datamodel::IGNORE;

fuzz_target!(|data: &[u8]| {
    let Some((&c, png)) = data.split_first() else {
        return;
    };
    if png.len() > 1 << 16 {
        return;
    }
    let c = usize::from(c % 16) + 1;
    if let Ok(mask) = decode_mask_png(png, c) {
        assert!(mask.data().iter().all(|&v| v == IGNORE || usize::from(v) < c));
    }
});
