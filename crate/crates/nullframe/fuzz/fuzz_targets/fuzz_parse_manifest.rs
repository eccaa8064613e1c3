#![no_main]

use libfuzzer_sys::fuzz_target;
use nullframe::manifest::load_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Manifest loading must return an error, never panic, on any input.
    let _ = load_manifest(text, "fuzz");
});
