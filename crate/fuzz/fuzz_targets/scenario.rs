#![no_main]

use crosslight::scenario::parse_scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    // Grid paths are read from disk; keep the fuzzer away from device files.
    if text.contains("/dev") || text.contains("/proc") || text.contains("/sys") {
        return;
    }
    if let Ok(s) = parse_scenario(text, None) {
        s.config.validate().expect("parsed scenarios are valid");
    }
});
