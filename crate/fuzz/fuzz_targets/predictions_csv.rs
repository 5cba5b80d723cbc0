#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = rebalance_forge::evaluation::parse_predictions(text) {
            if rows.len() <= 4096 {
                let _ = rebalance_forge::evaluation::evaluate_predictions(&rows);
            }
        }
    }
});
