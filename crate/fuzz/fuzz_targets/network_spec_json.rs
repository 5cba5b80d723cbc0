#![no_main]

use libfuzzer_sys::fuzz_target;

// Parse plus the shape-audit walk: findings are data, panics are bugs.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = rebalance_forge::progan::NetworkSpec::from_json(text) {
            let _ = rebalance_forge::progan::validate_network(&spec);
        }
    }
});
