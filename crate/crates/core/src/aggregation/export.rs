//! Aggregate table export in the `time_pattern,light,cars,avg_speed_mps,queue_m`
//! layout, with times rendered on a wall-clock style epoch.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LaneAggregate, LightColor};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("invalid time pattern `{0}`")]
    TimePattern(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Renders `epoch_s + t_s` as `hh:mm:ss.ss`.
pub fn format_time_pattern(epoch_s: f64, t_s: f64) -> String {
    let cs = ((epoch_s + t_s) * 100.0).round() as i64;
    let cs = cs.rem_euclid(24 * 3600 * 100);
    let (h, rest) = (cs / 360_000, cs % 360_000);
    let (m, rest) = (rest / 6000, rest % 6000);
    format!("{:02}:{:02}:{:02}.{:02}", h, m, rest / 100, rest % 100)
}

/// Parses `hh:mm:ss[.fraction]` into seconds of the day.
pub fn parse_time_pattern(s: &str) -> Result<f64, ExportError> {
    let bad = || ExportError::TimePattern(s.to_string());
    let parts: Vec<&str> = s.trim().split(':').collect();
    let [h, m, sec] = parts.as_slice() else { return Err(bad()) };
    let digits = |x: &str| !x.is_empty() && x.len() <= 2 && x.bytes().all(|b| b.is_ascii_digit());
    if !digits(h) || !digits(m) {
        return Err(bad());
    }
    let (whole, frac) = sec.split_once('.').unwrap_or((sec, ""));
    if !digits(whole) || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 9 {
        return Err(bad());
    }
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    let sec: f64 = sec.parse().map_err(|_| bad())?;
    if h >= 24 || m >= 60 || sec >= 60.0 {
        return Err(bad());
    }
    Ok(h as f64 * 3600.0 + m as f64 * 60.0 + sec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub time_pattern: String,
    pub light: String,
    pub cars: u32,
    pub avg_speed_mps: Option<f64>,
    pub queue_m: f64,
}

impl AggregateRow {
    /// Row stamped with the end of the aggregate's window.
    pub fn from_aggregate(agg: &LaneAggregate, epoch_s: f64) -> Self {
        AggregateRow {
            time_pattern: format_time_pattern(epoch_s, agg.window_end_s()),
            light: agg.light.as_str().to_string(),
            cars: agg.cars,
            avg_speed_mps: agg.avg_speed_mps,
            queue_m: agg.queue_length_m,
        }
    }

    pub fn light_color(&self) -> Option<LightColor> {
        match self.light.as_str() {
            "green" => Some(LightColor::Green),
            "red" => Some(LightColor::Red),
            _ => None,
        }
    }
}

pub fn write_aggregate_rows<W: Write>(writer: W, rows: &[AggregateRow]) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time_pattern", "light", "cars", "avg_speed_mps", "queue_m"])?;
    for r in rows {
        w.write_record([
            r.time_pattern.clone(),
            r.light.clone(),
            r.cars.to_string(),
            r.avg_speed_mps.map(|v| v.to_string()).unwrap_or_default(),
            r.queue_m.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn parse_aggregate_rows<R: Read>(reader: R) -> Result<Vec<AggregateRow>, ExportError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["time_pattern", "light", "cars", "avg_speed_mps", "queue_m"] {
        return Err(ExportError::Parse {
            line: 1,
            message: "expected header time_pattern,light,cars,avg_speed_mps,queue_m".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<AggregateRow>() {
        let row = rec.map_err(|e| ExportError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rows.len() as u64 + 2;
        let bad = |message: String| ExportError::Parse { line, message };
        parse_time_pattern(&row.time_pattern).map_err(|e| bad(e.to_string()))?;
        let color = row.light_color().ok_or_else(|| bad(format!("unknown light `{}`", row.light)))?;
        if !(row.queue_m >= 0.0) || !row.queue_m.is_finite() {
            return Err(bad("queue_m must be finite and non-negative".into()));
        }
        match (color, row.avg_speed_mps) {
            (LightColor::Red, Some(_)) => return Err(bad("red rows carry no speed".into())),
            (_, Some(v)) if !(v >= 0.0) || !v.is_finite() => {
                return Err(bad("avg_speed_mps must be finite and non-negative".into()))
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_patterns() {
        let epoch = parse_time_pattern("12:23:40.00").unwrap();
        assert_eq!(format_time_pattern(epoch, 12.55), "12:23:52.55");
        assert_eq!(format_time_pattern(epoch, 25.05), "12:24:05.05");
        assert_eq!(format_time_pattern(0.0, 86_400.0 + 1.0), "00:00:01.00");
        assert!(parse_time_pattern("25:00:00").is_err());
        assert!(parse_time_pattern("12:60:00").is_err());
        assert!(parse_time_pattern("12:00").is_err());
        assert!(parse_time_pattern("1a:00:00").is_err());
        assert!(parse_time_pattern("12:00:0x").is_err());
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![
            AggregateRow { time_pattern: "12:23:52.55".into(), light: "green".into(), cars: 19, avg_speed_mps: Some(7.0), queue_m: 200.0 },
            AggregateRow { time_pattern: "12:24:05.05".into(), light: "red".into(), cars: 15, avg_speed_mps: None, queue_m: 60.0 },
        ];
        let mut buf = Vec::new();
        write_aggregate_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "time_pattern,light,cars,avg_speed_mps,queue_m\n12:23:52.55,green,19,7,200\n12:24:05.05,red,15,,60\n"
        );
        assert_eq!(parse_aggregate_rows(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn rejects_bad_rows() {
        let head = "time_pattern,light,cars,avg_speed_mps,queue_m\n";
        for body in ["12:00:00.00,blue,1,,0\n", "12:00:00.00,red,1,3,0\n", "x,red,1,,0\n", "12:00:00.00,red,-1,,0\n"] {
            assert!(parse_aggregate_rows(format!("{head}{body}").as_bytes()).is_err(), "{body}");
        }
    }
}
