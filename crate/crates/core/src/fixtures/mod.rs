//! Bundled reference data for the four-leg crossroad and the checks that
//! keep it honest.
//!
//! * the printed conflict matrix, verbatim, plus its symmetrized variant
//! * a counter vector with a known minimum set
//! * a per-lane detection trace with its expected aggregate rows

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::aggregation::{aggregate_window, format_time_pattern, parse_aggregate_rows, parse_time_pattern, AggregateRow};
use crate::aggregation::AggregationError;
use crate::control::min_counter_events;
use crate::sensing::{read_detection_trace, write_detection_trace, DetectionEvent};
use crate::topology::{load_conflict_matrix, parse_conflict_grid, ConflictGraph, GraphError};

mod sample;

pub use sample::{sample_config, sample_layout, sample_trace, SAMPLE_EPOCH, SAMPLE_LANE, SAMPLE_WINDOWS};

pub const CONFLICT_GRID_PRINTED: &str = include_str!("data/conflict_grid_printed.grid");
pub const CONFLICT_GRID_SYMMETRIZED: &str = include_str!("data/conflict_grid_symmetrized.grid");
pub const COUNTER_SNAPSHOT: &str = include_str!("data/counter_snapshot.tsv");
pub const SAMPLE_TRACE: &str = include_str!("data/sample_trace.csv");
pub const SAMPLE_ROWS: &str = include_str!("data/sample_rows.csv");

/// File names used by [`FixtureSet::load`].
pub const FIXTURE_FILES: [&str; 5] =
    ["conflict_grid_printed.grid", "conflict_grid_symmetrized.grid", "counter_snapshot.tsv", "sample_trace.csv", "sample_rows.csv"];

/// The event list as printed for the four-leg crossroad. It has 15 entries:
/// `IN3OUT4` is missing although the text counts 12 vehicle movements.
pub const PRINTED_EVENT_LIST: [&str; 15] = [
    "IN1OUT2", "IN1OUT3", "IN1OUT4", "IN2OUT3", "IN2OUT4", "IN2OUT1", "IN3OUT1", "IN3OUT2", "IN4OUT1", "IN4OUT2",
    "IN4OUT3", "C1", "C2", "C3", "C4",
];

/// Zero-based events with the smallest counter in [`COUNTER_SNAPSHOT`]:
/// E4, E5, E9, E12 and E14.
pub const SNAPSHOT_MIN_EVENTS: [usize; 5] = [3, 4, 8, 11, 13];

/// Pedestrian crossings in the conflict matrix, zero-based.
pub const CONFLICT_GRID_CROSSINGS: [usize; 4] = [12, 13, 14, 15];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct CountersError {
    pub line: usize,
    pub message: String,
}

const MAX_COUNTERS: usize = 4096;

/// Parses a counter table: one line of labels `T1 .. Tn`, then one line of
/// `n` non-negative integers, separated by whitespace.
pub fn parse_counters(text: &str) -> Result<Vec<u64>, CountersError> {
    let err = |line: usize, message: String| CountersError { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (label_no, labels) = lines.next().ok_or_else(|| err(1, "empty counter file".into()))?;
    let labels: Vec<&str> = labels.split_whitespace().collect();
    if labels.len() > MAX_COUNTERS {
        return Err(err(label_no, format!("{} counters exceed the limit of {MAX_COUNTERS}", labels.len())));
    }
    for (i, l) in labels.iter().enumerate() {
        if *l != format!("T{}", i + 1) {
            return Err(err(label_no, format!("column {}: expected label T{}, found `{l}`", i + 1, i + 1)));
        }
    }
    let (value_no, values) = lines.next().ok_or_else(|| err(label_no, "missing the counter values line".into()))?;
    let values: Vec<&str> = values.split_whitespace().collect();
    if values.len() != labels.len() {
        return Err(err(value_no, format!("expected {} values, found {}", labels.len(), values.len())));
    }
    if let Some((no, _)) = lines.next() {
        return Err(err(no, "unexpected content after the counter values".into()));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.parse::<u64>()
                .map_err(|_| err(value_no, format!("T{}: expected a non-negative integer, found `{v}`", i + 1)))
        })
        .collect()
}

pub fn write_counters(counters: &[u64]) -> String {
    let labels: Vec<String> = (1..=counters.len()).map(|i| format!("T{i}")).collect();
    let values: Vec<String> = counters.iter().map(u64::to_string).collect();
    format!("{}\n{}\n", labels.join("\t"), values.join("\t"))
}

/// Replays a trace over the reference windows and renders the rows.
pub fn replay_sample(trace: &[DetectionEvent]) -> Result<Vec<AggregateRow>, AggregationError> {
    let epoch = parse_time_pattern(SAMPLE_EPOCH).expect("valid epoch");
    let layout = sample_layout();
    let cfg = sample_config();
    SAMPLE_WINDOWS
        .iter()
        .map(|&(t0, t1, light)| {
            aggregate_window(trace, &layout, light, (t0, t1), &cfg).map(|a| AggregateRow::from_aggregate(&a, epoch))
        })
        .collect()
}

pub fn sample_trace_csv() -> String {
    let mut buf = Vec::new();
    write_detection_trace(&mut buf, &sample_trace()).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8")
}

/// The reference rows as printed, stamped with window ends.
pub fn sample_expected_rows() -> Vec<AggregateRow> {
    let epoch = parse_time_pattern(SAMPLE_EPOCH).expect("valid epoch");
    let printed = [(19, Some(7.0), 200.0), (26, Some(10.0), 127.0), (12, Some(13.0), 30.0), (15, None, 60.0), (13, None, 121.0), (7, None, 160.0)];
    SAMPLE_WINDOWS
        .iter()
        .zip(printed)
        .map(|(&(_, t1, light), (cars, avg_speed_mps, queue_m))| AggregateRow {
            time_pattern: format_time_pattern(epoch, t1),
            light: light.as_str().to_string(),
            cars,
            avg_speed_mps,
            queue_m,
        })
        .collect()
}

/// Raw fixture texts, bundled or read from a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureSet {
    pub conflict_grid_printed: String,
    pub conflict_grid_symmetrized: String,
    pub counter_snapshot: String,
    pub sample_trace: String,
    pub sample_rows: String,
}

impl FixtureSet {
    pub fn bundled() -> Self {
        FixtureSet {
            conflict_grid_printed: CONFLICT_GRID_PRINTED.into(),
            conflict_grid_symmetrized: CONFLICT_GRID_SYMMETRIZED.into(),
            counter_snapshot: COUNTER_SNAPSHOT.into(),
            sample_trace: SAMPLE_TRACE.into(),
            sample_rows: SAMPLE_ROWS.into(),
        }
    }

    /// Reads the files named in [`FIXTURE_FILES`] from `dir`.
    pub fn load(dir: &Path) -> io::Result<Self> {
        let read = |i: usize| fs::read_to_string(dir.join(FIXTURE_FILES[i]));
        Ok(FixtureSet {
            conflict_grid_printed: read(0)?,
            conflict_grid_symmetrized: read(1)?,
            counter_snapshot: read(2)?,
            sample_trace: read(3)?,
            sample_rows: read(4)?,
        })
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let texts = [
            &self.conflict_grid_printed,
            &self.conflict_grid_symmetrized,
            &self.counter_snapshot,
            &self.sample_trace,
            &self.sample_rows,
        ];
        for (name, text) in FIXTURE_FILES.iter().zip(texts) {
            fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Repair one-sided conflict cells instead of rejecting them.
    pub symmetrize_grid: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { symmetrize_grid: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureCheck {
    pub name: &'static str,
    /// One line per mismatching cell or field; empty when the check passes.
    pub diffs: Vec<String>,
    pub notes: Vec<String>,
}

impl FixtureCheck {
    pub fn passed(&self) -> bool {
        self.diffs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureReport {
    pub checks: Vec<FixtureCheck>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(FixtureCheck::passed)
    }
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}", if c.passed() { "PASS" } else { "FAIL" }, c.name)?;
            for n in &c.notes {
                writeln!(f, "  note: {n}")?;
            }
            for d in &c.diffs {
                writeln!(f, "  {d}")?;
            }
        }
        Ok(())
    }
}

pub fn verify_fixtures(set: &FixtureSet, opts: VerifyOptions) -> FixtureReport {
    FixtureReport { checks: vec![check_counters(set), check_conflict_matrix(set, opts), check_trace(set)] }
}

pub fn verify_bundled() -> FixtureReport {
    verify_fixtures(&FixtureSet::bundled(), VerifyOptions::default())
}

fn event(i: usize) -> String {
    format!("E{}", i + 1)
}

fn check_counters(set: &FixtureSet) -> FixtureCheck {
    let mut check = FixtureCheck { name: "counters", diffs: Vec::new(), notes: Vec::new() };
    let counters = match parse_counters(&set.counter_snapshot) {
        Ok(c) => c,
        Err(e) => {
            check.diffs.push(e.to_string());
            return check;
        }
    };
    if counters.len() != 16 {
        check.diffs.push(format!("expected 16 counters, found {}", counters.len()));
        return check;
    }
    let chosen = match min_counter_events(&counters, &[true; 16]) {
        Ok(c) => c,
        Err(e) => {
            check.diffs.push(e.to_string());
            return check;
        }
    };
    let expected: BTreeSet<usize> = SNAPSHOT_MIN_EVENTS.into_iter().collect();
    let min = counters.iter().min().copied().unwrap_or(0);
    check.notes.push(format!("minimum counter {min}"));
    for &i in chosen.symmetric_difference(&expected) {
        let verdict = if chosen.contains(&i) { "selected but not expected" } else { "expected but not selected" };
        check.diffs.push(format!("T{}: value {}, {} {verdict} (minimum {min})", i + 1, counters[i], event(i)));
    }
    check
}

fn bit(b: bool) -> u8 {
    u8::from(b)
}

fn check_conflict_matrix(set: &FixtureSet, opts: VerifyOptions) -> FixtureCheck {
    let mut check = FixtureCheck { name: "conflict matrix", diffs: Vec::new(), notes: Vec::new() };
    let parse = |text: &str, what: &str| parse_conflict_grid(text).map_err(|e| format!("{what}: {e}"));
    let (printed, reference) = match (parse(&set.conflict_grid_printed, "printed"), parse(&set.conflict_grid_symmetrized, "symmetrized")) {
        (Ok(p), Ok(r)) => (p, r),
        (p, r) => {
            check.diffs.extend(p.err());
            check.diffs.extend(r.err());
            return check;
        }
    };
    let graph = match load_conflict_matrix(&printed, opts.symmetrize_grid) {
        Ok((g, report)) => {
            for &(i, j) in &report.repaired {
                check.notes.push(format!(
                    "repaired {},{}: printed {} one way and {} the other",
                    event(i),
                    event(j),
                    bit(printed[i][j]),
                    bit(printed[j][i])
                ));
            }
            g
        }
        Err(GraphError::Asymmetric { cells }) => {
            for (i, j) in cells {
                check.diffs.push(format!(
                    "{},{}: {} but transposed cell {},{} is {}",
                    event(i),
                    event(j),
                    bit(printed[i][j]),
                    event(j),
                    event(i),
                    bit(printed[j][i])
                ));
            }
            return check;
        }
        Err(e) => {
            check.diffs.push(e.to_string());
            return check;
        }
    };
    diff_graph(&graph, &reference, &mut check.diffs);
    if graph.len() > CONFLICT_GRID_CROSSINGS[3] && !graph.is_compatible_set(&CONFLICT_GRID_CROSSINGS).unwrap_or(false) {
        check.diffs.push("pedestrian crossings E13..E16 are not mutually compatible".into());
    }
    check
}

fn diff_graph(graph: &ConflictGraph, reference: &[Vec<bool>], diffs: &mut Vec<String>) {
    if reference.len() != graph.len() {
        diffs.push(format!("symmetrized matrix has {} events, printed has {}", reference.len(), graph.len()));
        return;
    }
    for (i, row) in reference.iter().enumerate() {
        for (j, &want) in row.iter().enumerate() {
            let got = i != j && graph.conflicts(i, j);
            if got != want {
                diffs.push(format!("{},{}: expected {}, got {}", event(i), event(j), bit(want), bit(got)));
            }
        }
    }
}

fn check_trace(set: &FixtureSet) -> FixtureCheck {
    let mut check = FixtureCheck { name: "aggregation trace", diffs: Vec::new(), notes: Vec::new() };
    let trace = match read_detection_trace(set.sample_trace.as_bytes()) {
        Ok(t) => t,
        Err(e) => {
            check.diffs.push(format!("trace: {e}"));
            return check;
        }
    };
    let expected = match parse_aggregate_rows(set.sample_rows.as_bytes()) {
        Ok(r) => r,
        Err(e) => {
            check.diffs.push(format!("rows: {e}"));
            return check;
        }
    };
    let got = match replay_sample(&trace) {
        Ok(r) => r,
        Err(e) => {
            check.diffs.push(format!("replay: {e}"));
            return check;
        }
    };
    check.notes.push(format!("{} detections replayed", trace.len()));
    diff_rows(&expected, &got, &mut check.diffs);
    check
}

/// The trace is built to hit the whole-number speeds exactly.
const SPEED_TOL: f64 = 1e-9;

fn diff_rows(expected: &[AggregateRow], got: &[AggregateRow], diffs: &mut Vec<String>) {
    if expected.len() != got.len() {
        diffs.push(format!("expected {} rows, got {}", expected.len(), got.len()));
    }
    for (k, (e, g)) in expected.iter().zip(got).enumerate() {
        let row = k + 1;
        if e.time_pattern != g.time_pattern {
            diffs.push(format!("row {row} time_pattern: expected {}, got {}", e.time_pattern, g.time_pattern));
        }
        if e.light != g.light {
            diffs.push(format!("row {row} light: expected {}, got {}", e.light, g.light));
        }
        if e.cars != g.cars {
            diffs.push(format!("row {row} cars: expected {}, got {}", e.cars, g.cars));
        }
        let speed_ok = match (e.avg_speed_mps, g.avg_speed_mps) {
            (Some(a), Some(b)) => (a - b).abs() <= SPEED_TOL,
            (None, None) => true,
            _ => false,
        };
        if !speed_ok {
            diffs.push(format!("row {row} avg_speed_mps: expected {:?}, got {:?}", e.avg_speed_mps, g.avg_speed_mps));
        }
        if e.queue_m != g.queue_m {
            diffs.push(format!("row {row} queue_m: expected {}, got {}", e.queue_m, g.queue_m));
        }
    }
}
