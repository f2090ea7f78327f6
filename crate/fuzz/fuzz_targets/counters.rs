#![no_main]

use crosslight::fixtures::{parse_counters, write_counters};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(counters) = parse_counters(text) {
        assert_eq!(parse_counters(&write_counters(&counters)).unwrap(), counters);
    }
});
