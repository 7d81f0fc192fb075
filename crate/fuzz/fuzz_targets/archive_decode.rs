#![no_main]

use libfuzzer_sys::fuzz_target;
use tada::networks::TensorArchive;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = TensorArchive::decode(data) {
        let bytes = a.encode().expect("decoded archives re-encode");
        assert_eq!(TensorArchive::decode(&bytes).expect("round trip"), a);
    }
});
