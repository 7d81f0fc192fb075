#![no_main]

use libfuzzer_sys::fuzz_target;
use tada::networks::{Checkpoint, ModelArch};

fuzz_target!(|data: &[u8]| {
    let Ok(ckpt) = Checkpoint::decode(data) else {
        return;
    };
    // A decoded checkpoint must either rebuild its model or fail cleanly.
    match ckpt.meta.arch {
        ModelArch::Generator { .. } => drop(ckpt.generator::<f32>()),
        ModelArch::Discriminator { .. } => drop(ckpt.discriminator::<f32>()),
        ModelArch::Task { .. } => drop(ckpt.task::<f32>()),
    }
});
