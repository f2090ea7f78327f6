//! Access-point layer: per-lane windows split by light colour, queue
//! estimation, congestion events and filtered queries for the controller.

mod access_point;
mod export;
mod lane_trace;
mod tiler;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::sensing::{DetectionEvent, LaneSensorArray, SensorState};

pub use access_point::{
    AccessPoint, AggregateEndpoint, EndpointError, NodeReport, PedestrianAggregate, QueryResponse, SensorEdge,
    SensorMessage,
};
pub use export::{
    format_time_pattern, parse_aggregate_rows, parse_time_pattern, write_aggregate_rows, AggregateRow, ExportError,
};
pub use lane_trace::LaneTrace;
pub use tiler::{Window, WindowTiler};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("window [{t0}, {t1}) is empty")]
    EmptyWindow { t0: f64, t1: f64 },
    #[error("detections from lanes {0} and {1} in one window")]
    MixedLanes(usize, usize),
    #[error("lane {lane} has no sensor {sensor}")]
    UnknownSensor { lane: usize, sensor: usize },
    #[error("no sensor at {position_m} m on lane {lane}")]
    UnknownPosition { lane: usize, position_m: f64 },
    #[error("detection at sensor {sensor} of lane {lane} at {time_s} s is out of order")]
    OutOfOrder { lane: usize, sensor: usize, time_s: f64 },
    #[error("unknown lane {0}")]
    UnknownLane(usize),
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("invalid aggregation settings: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LightColor {
    Green,
    Red,
}

impl LightColor {
    pub fn as_str(&self) -> &'static str {
        match self {
            LightColor::Green => "green",
            LightColor::Red => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationConfig {
    /// Nominal window length; windows are cut short at light changes.
    pub window_len_s: f64,
    /// A sensor held longer than `footprint_m / stopped_speed_mps` is read
    /// as a stopped vehicle.
    pub stopped_speed_mps: f64,
    /// Length over which one vehicle keeps a sensor occupied.
    pub footprint_m: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig { window_len_s: 5.0, stopped_speed_mps: 2.0, footprint_m: 6.0 }
    }
}

impl AggregationConfig {
    pub fn stop_dwell_s(&self) -> f64 {
        stop_dwell(self.stopped_speed_mps, self.footprint_m)
    }

    pub fn validate(&self) -> Result<(), AggregationError> {
        if !(self.window_len_s > 0.0) || !self.window_len_s.is_finite() {
            return Err(AggregationError::InvalidConfig("window_len_s must be positive".into()));
        }
        if !(self.stopped_speed_mps >= 0.0) || !self.stopped_speed_mps.is_finite() {
            return Err(AggregationError::InvalidConfig("stopped_speed_mps must be non-negative".into()));
        }
        if !(self.footprint_m > 0.0) || !self.footprint_m.is_finite() {
            return Err(AggregationError::InvalidConfig("footprint_m must be positive".into()));
        }
        Ok(())
    }
}

fn stop_dwell(stopped_speed_mps: f64, footprint_m: f64) -> f64 {
    footprint_m / stopped_speed_mps
}

/// One row of the per-lane aggregation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneAggregate {
    pub lane: usize,
    pub window_start_s: f64,
    pub window_len_s: f64,
    pub light: LightColor,
    /// Vehicles that passed the stop line (green) or joined the queue (red).
    pub cars: u32,
    /// Mean speed of the vehicles counted on green.
    pub avg_speed_mps: Option<f64>,
    pub queue_length_m: f64,
    /// Vehicles on the instrumented stretch at the end of the window.
    pub vehicles_present: u32,
}

impl LaneAggregate {
    pub fn window_end_s(&self) -> f64 {
        self.window_start_s + self.window_len_s
    }
}

/// Aggregates the detections of one lane over `[t0, t1)`.
pub fn aggregate_window(
    detections: &[DetectionEvent],
    layout: &LaneSensorArray,
    light: LightColor,
    window: (f64, f64),
    cfg: &AggregationConfig,
) -> Result<LaneAggregate, AggregationError> {
    let lane = detections.first().map_or(layout.lane, |d| d.lane);
    if let Some(d) = detections.iter().find(|d| d.lane != lane) {
        return Err(AggregationError::MixedLanes(lane, d.lane));
    }
    let mut trace = LaneTrace::new(&layout.clone().with_lane(lane), *cfg);
    let mut indexed = Vec::with_capacity(detections.len());
    for d in detections {
        let sensor = layout
            .index_of(d.position_m)
            .ok_or(AggregationError::UnknownPosition { lane, position_m: d.position_m })?;
        indexed.push((sensor, d.enter_s, d.exit_s));
    }
    indexed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    for (sensor, enter, exit) in indexed {
        trace.push_enter(sensor, enter)?;
        if let Some(x) = exit {
            trace.push_exit(sensor, x)?;
        }
    }
    trace.aggregate(light, window.0, window.1, f64::INFINITY)
}

/// Length of the stopped queue at the stop line: the contiguous run of
/// sensors, starting at the stop line, that have been occupied long enough
/// to imply a speed at or below `stopped_speed_mps`.
pub fn queue_length(array: &LaneSensorArray, now_s: f64, stopped_speed_mps: f64, footprint_m: f64) -> f64 {
    let tau = stop_dwell(stopped_speed_mps, footprint_m);
    let run = array
        .occupancy
        .iter()
        .take_while(|s| matches!(s, SensorState::Occupied { since_s } if now_s - since_s >= tau))
        .count();
    run as f64 * array.spacing_m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionEvent {
    pub lane: usize,
    pub timestamp_s: f64,
    pub queue_length_m: f64,
    pub threshold_m: f64,
}

/// Edge-triggered queue threshold watcher, one state per lane.
#[derive(Debug, Clone)]
pub struct CongestionDetector {
    threshold_m: f64,
    above: BTreeMap<usize, bool>,
}

impl CongestionDetector {
    pub fn new(threshold_m: f64) -> Result<Self, AggregationError> {
        if !(threshold_m > 0.0) {
            return Err(AggregationError::InvalidThreshold(threshold_m));
        }
        Ok(CongestionDetector { threshold_m, above: BTreeMap::new() })
    }

    pub fn feed(&mut self, agg: &LaneAggregate) -> Option<CongestionEvent> {
        let now_above = agg.queue_length_m > self.threshold_m;
        let was_above = self.above.insert(agg.lane, now_above).unwrap_or(false);
        (now_above && !was_above).then(|| CongestionEvent {
            lane: agg.lane,
            timestamp_s: agg.window_end_s(),
            queue_length_m: agg.queue_length_m,
            threshold_m: self.threshold_m,
        })
    }
}

pub fn emit_congestion_events(
    aggregates: &[LaneAggregate],
    threshold_m: f64,
) -> Result<Vec<CongestionEvent>, AggregationError> {
    let mut det = CongestionDetector::new(threshold_m)?;
    Ok(aggregates.iter().filter_map(|a| det.feed(a)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Cars,
    Speed,
    Queue,
    Pedestrians,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Cars, Metric::Speed, Metric::Queue, Metric::Pedestrians];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryParams {
    /// `None` selects every lane.
    pub lanes: Option<BTreeSet<usize>>,
    pub metrics: BTreeSet<Metric>,
    pub windows: usize,
}

impl QueryParams {
    pub fn all(windows: usize) -> Self {
        QueryParams { lanes: None, metrics: Metric::ALL.into_iter().collect(), windows: windows.max(1) }
    }

    fn wants_lane(&self, lane: usize) -> bool {
        self.lanes.as_ref().is_none_or(|l| l.contains(&lane))
    }

    fn wants_lane_rows(&self) -> bool {
        self.metrics.iter().any(|m| *m != Metric::Pedestrians)
    }
}

/// The latest `params.windows` rows of every selected lane, in history
/// order, before redundancy suppression.
pub fn select_rows(history: &[LaneAggregate], params: &QueryParams) -> Vec<LaneAggregate> {
    if !params.wants_lane_rows() {
        return Vec::new();
    }
    let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
    let mut picked: Vec<LaneAggregate> = history
        .iter()
        .rev()
        .filter(|a| params.wants_lane(a.lane))
        .filter(|a| {
            let n = taken.entry(a.lane).or_insert(0);
            *n += 1;
            *n <= params.windows
        })
        .copied()
        .collect();
    picked.reverse();
    picked
}

/// Values of the selected metrics, compared bit for bit.
fn projection(agg: &LaneAggregate, metrics: &BTreeSet<Metric>) -> Vec<u64> {
    let mut v = Vec::new();
    if metrics.contains(&Metric::Cars) {
        v.push(agg.cars as u64);
        v.push(agg.vehicles_present as u64);
    }
    if metrics.contains(&Metric::Speed) {
        v.push(agg.avg_speed_mps.map_or(u64::MAX, f64::to_bits));
    }
    if metrics.contains(&Metric::Queue) {
        v.push(agg.queue_length_m.to_bits());
    }
    v
}
