//! Tidy CSV series for external plotting, one observation per row.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use thiserror::Error;

use crate::simulator::{SimOutput, SweepRow};

/// Width of the delay histogram bins.
pub const WAIT_BIN_S: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlotKind {
    QueueTimeseries,
    SpeedVsCycle,
    WaitHistogram,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::QueueTimeseries, PlotKind::SpeedVsCycle, PlotKind::WaitHistogram];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlotKind::QueueTimeseries => "queue_timeseries",
            PlotKind::SpeedVsCycle => "speed_vs_cycle",
            PlotKind::WaitHistogram => "wait_histogram",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlotKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| PlotError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("unknown plot kind `{0}` (expected queue_timeseries, speed_vs_cycle or wait_histogram)")]
    UnknownKind(String),
    #[error("{0} needs {1}")]
    MissingInput(PlotKind, &'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// What a plot can draw from: a single run, a cycle sweep, or both.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlotInput<'a> {
    pub run: Option<&'a SimOutput>,
    pub sweep: Option<&'a [SweepRow]>,
}

pub fn emit_plot_data<W: Write>(writer: W, kind: PlotKind, input: PlotInput<'_>) -> Result<(), PlotError> {
    let mut w = csv::Writer::from_writer(writer);
    match kind {
        PlotKind::QueueTimeseries => {
            let run = input.run.ok_or(PlotError::MissingInput(kind, "a simulation run"))?;
            w.write_record(["lane", "label", "window_end_s", "light", "queue_m"])?;
            for a in &run.aggregates {
                w.write_record([
                    a.lane.to_string(),
                    run.events.label(a.lane),
                    format!("{:.2}", a.window_end_s()),
                    a.light.as_str().to_string(),
                    format!("{:.1}", a.queue_length_m),
                ])?;
            }
        }
        PlotKind::SpeedVsCycle => {
            let sweep = input.sweep.ok_or(PlotError::MissingInput(kind, "a cycle sweep"))?;
            w.write_record(["green_s", "avg_speed_mps", "throughput"])?;
            for r in sweep {
                w.write_record([
                    format!("{}", r.green_s),
                    format!("{:.4}", r.avg_intersection_speed_mps),
                    r.throughput.to_string(),
                ])?;
            }
        }
        PlotKind::WaitHistogram => {
            let run = input.run.ok_or(PlotError::MissingInput(kind, "a simulation run"))?;
            w.write_record(["bin_start_s", "bin_end_s", "vehicles"])?;
            for (k, count) in wait_histogram(run).into_iter().enumerate() {
                let lo = k as f64 * WAIT_BIN_S;
                w.write_record([format!("{lo}"), format!("{}", lo + WAIT_BIN_S), count.to_string()])?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Departed vehicles per delay bin of [`WAIT_BIN_S`].
pub fn wait_histogram(run: &SimOutput) -> Vec<u64> {
    let mut bins: Vec<u64> = Vec::new();
    for v in &run.vehicles {
        let k = (v.delay_s.max(0.0) / WAIT_BIN_S).floor() as usize;
        if bins.len() <= k {
            bins.resize(k + 1, 0);
        }
        bins[k] += 1;
    }
    bins
}
