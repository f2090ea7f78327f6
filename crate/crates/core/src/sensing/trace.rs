use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DetectionEvent;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    lane: usize,
    position_m: f64,
    enter_s: f64,
    exit_s: Option<f64>,
}

/// Reads a detection trace with header `lane,position_m,enter_s,exit_s`.
/// An empty `exit_s` marks a vehicle still over the sensor.
pub fn read_detection_trace<R: Read>(reader: R) -> Result<Vec<DetectionEvent>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["lane", "position_m", "enter_s", "exit_s"] {
        return Err(TraceError::Parse {
            line: 1,
            message: "expected header lane,position_m,enter_s,exit_s".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Row>() {
        let row = rec.map_err(|e| TraceError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        let bad = |message: &str| TraceError::Parse { line, message: message.into() };
        if !row.position_m.is_finite() || row.position_m < 0.0 {
            return Err(bad("position_m must be finite and non-negative"));
        }
        if !row.enter_s.is_finite() {
            return Err(bad("enter_s must be finite"));
        }
        if let Some(x) = row.exit_s {
            if !x.is_finite() || x < row.enter_s {
                return Err(bad("exit_s must be finite and not before enter_s"));
            }
        }
        out.push(DetectionEvent { lane: row.lane, position_m: row.position_m, enter_s: row.enter_s, exit_s: row.exit_s });
    }
    Ok(out)
}

pub fn write_detection_trace<W: Write>(writer: W, detections: &[DetectionEvent]) -> Result<(), TraceError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for d in detections {
        wtr.serialize(Row { lane: d.lane, position_m: d.position_m, enter_s: d.enter_s, exit_s: d.exit_s })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
