#![no_main]

use libfuzzer_sys::fuzz_target;

// Manifest parsing must return errors, never panic, on arbitrary input.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = rebalance_forge::manifest::parse_manifest(text);
    }
});
