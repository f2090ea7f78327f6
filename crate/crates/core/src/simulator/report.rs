use std::io::Write;

use thiserror::Error;

use super::{LogRecord, SimMetrics};
use crate::control::DecisionRecord;
use crate::topology::EventSet;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0} values for {1} events")]
    Width(usize, usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

/// One row per run, with per-event columns after the summary columns.
pub fn write_metrics_csv<W: Write>(writer: W, events: &EventSet, runs: &[SimMetrics]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = [
        "seed",
        "duration_s",
        "arrivals",
        "throughput",
        "avg_intersection_speed_mps",
        "mean_vehicle_wait_s",
        "pedestrian_mean_wait_s",
        "pedestrians_served",
        "pedestrians_turned_away",
        "decisions",
        "rejected_messages",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let labels = events.labels();
    for prefix in ["mean_wait_s", "max_wait_s", "max_red_s", "max_queue_m"] {
        header.extend(labels.iter().map(|l| format!("{prefix}:{l}")));
    }
    w.write_record(&header)?;
    for m in runs {
        for v in [&m.mean_wait_s, &m.max_wait_s, &m.max_red_s, &m.max_queue_m] {
            if v.len() != labels.len() {
                return Err(ReportError::Width(v.len(), labels.len()));
            }
        }
        let mut row = vec![
            m.seed.to_string(),
            fmt(m.duration_s),
            m.arrivals.to_string(),
            m.throughput.to_string(),
            fmt(m.avg_intersection_speed_mps),
            fmt(m.mean_vehicle_wait_s),
            fmt(m.pedestrian_mean_wait_s),
            m.pedestrians_served.to_string(),
            m.pedestrians_turned_away.to_string(),
            m.decisions.to_string(),
            m.rejected_messages.to_string(),
        ];
        for v in [&m.mean_wait_s, &m.max_wait_s, &m.max_red_s, &m.max_queue_m] {
            row.extend(v.iter().map(|x| fmt(*x)));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `clock_s,green_set,duration_s,trigger` with `;`-joined labels.
pub fn write_decisions_csv<W: Write>(
    writer: W,
    events: &EventSet,
    decisions: &[DecisionRecord],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["clock_s", "green_set", "duration_s", "trigger"])?;
    for d in decisions {
        w.write_record([
            format!("{:.2}", d.clock_s),
            events.join_labels(&d.green_set),
            format!("{:.2}", d.duration_s),
            d.trigger.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_event_log<W: Write>(writer: W, log: &[LogRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["tick", "entity", "event", "detail"])?;
    for r in log {
        w.write_record([r.tick.to_string(), r.entity.clone(), r.event.clone(), r.detail.clone()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
