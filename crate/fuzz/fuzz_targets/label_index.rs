#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&c, rest)) = data.split_first() else {
        return;
    };
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(index) = tada::data::directory::parse_label_index(text, usize::from(c)) {
            assert!(index.values().flatten().all(|&k| k < usize::from(c)));
        }
    }
});
