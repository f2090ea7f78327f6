#![no_main]

use crosslight::aggregation::{parse_aggregate_rows, parse_time_pattern};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_aggregate_rows(data) {
        for r in rows {
            parse_time_pattern(&r.time_pattern).expect("accepted rows carry a valid stamp");
        }
    }
});
