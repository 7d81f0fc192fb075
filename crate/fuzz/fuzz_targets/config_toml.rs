#![no_main]

use libfuzzer_sys::fuzz_target;
use tada::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_toml(text) {
            let text = cfg.to_toml().expect("serialize");
            let again = ExperimentConfig::from_toml(&text).expect("reparse");
            assert_eq!(again.to_toml().expect("serialize"), text);
        }
    }
});
