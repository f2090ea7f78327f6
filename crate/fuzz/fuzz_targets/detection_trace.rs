#![no_main]

use crosslight::sensing::read_detection_trace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = read_detection_trace(data) {
        for d in trace {
            assert!(d.enter_s.is_finite());
            assert!(d.exit_s.is_none_or(|x| x >= d.enter_s));
        }
    }
});
