#![no_main]

use libfuzzer_sys::fuzz_target;
use mmunlearn::harness::{parse_json_with_offset, ExperimentConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_json_with_offset::<ExperimentConfig>(text) {
            let _ = cfg.validate();
        }
    }
});
