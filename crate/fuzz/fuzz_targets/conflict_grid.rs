#![no_main]

use crosslight::topology::{load_conflict_matrix, parse_conflict_grid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(rows) = parse_conflict_grid(text) else { return };
    let strict = load_conflict_matrix(&rows, false);
    let repaired = load_conflict_matrix(&rows, true);
    if let Ok((g, report)) = strict {
        assert!(report.is_clean());
        let (r, _) = repaired.expect("a strict load also loads when repairing");
        assert_eq!(g.len(), r.len());
    }
    if let Ok((g, _)) = load_conflict_matrix(&rows, true) {
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(g.conflicts(i, j), g.conflicts(j, i));
            }
        }
    }
});
