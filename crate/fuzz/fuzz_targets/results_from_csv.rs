#![no_main]

use libfuzzer_sys::fuzz_target;
use mmunlearn::harness::results_from_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = results_from_csv(text);
    }
});
