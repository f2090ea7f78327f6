//! Virtual sensing layer: magnetometer arrays along each approach lane,
//! pedestrian waiting areas, emergency beacons and the radio reporting
//! schedule toward the access point.

mod trace;

use thiserror::Error;

pub use trace::{read_detection_trace, write_detection_trace, TraceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("non-causal detection pair: {first} s then {second} s")]
    NonCausalPair { first: f64, second: f64 },
    #[error("sensor spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("sensor span must be non-negative, got {0}")]
    InvalidSpan(f64),
    #[error("pedestrian areas belong to crossings {0} and {1}")]
    MismatchedCrossing(usize, usize),
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("no sensor at {position_m} m on lane {lane}")]
    UnknownPosition { lane: usize, position_m: f64 },
    #[error("detections overlap at {position_m} m on lane {lane} around {time_s} s")]
    Overlap { lane: usize, position_m: f64, time_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorState {
    Vacant,
    Occupied { since_s: f64 },
}

/// Point sensors on one lane at `0, spacing, 2 * spacing, ...` metres
/// upstream from the stop line.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneSensorArray {
    pub lane: usize,
    pub positions_m: Vec<f64>,
    pub spacing_m: f64,
    pub occupancy: Vec<SensorState>,
}

pub fn layout_sensors(span_m: f64, spacing_m: f64) -> Result<LaneSensorArray, SensingError> {
    if !(spacing_m > 0.0) || !spacing_m.is_finite() {
        return Err(SensingError::InvalidSpacing(spacing_m));
    }
    if !(span_m >= 0.0) || !span_m.is_finite() {
        return Err(SensingError::InvalidSpan(span_m));
    }
    let count = (span_m / spacing_m + 1e-9).floor() as usize + 1;
    Ok(LaneSensorArray {
        lane: 0,
        positions_m: (0..count).map(|k| k as f64 * spacing_m).collect(),
        spacing_m,
        occupancy: vec![SensorState::Vacant; count],
    })
}

impl LaneSensorArray {
    pub fn with_lane(mut self, lane: usize) -> Self {
        self.lane = lane;
        self
    }

    pub fn len(&self) -> usize {
        self.positions_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions_m.is_empty()
    }

    pub fn span_m(&self) -> f64 {
        self.positions_m.last().copied().unwrap_or(0.0)
    }

    /// Sensor index at `position_m`, tolerating float noise.
    pub fn index_of(&self, position_m: f64) -> Option<usize> {
        let k = (position_m / self.spacing_m).round();
        if k < 0.0 || (k * self.spacing_m - position_m).abs() > 1e-6 {
            return None;
        }
        let k = k as usize;
        (k < self.len()).then_some(k)
    }

    pub fn occupy(&mut self, index: usize, since_s: f64) {
        self.occupancy[index] = SensorState::Occupied { since_s };
    }

    pub fn vacate(&mut self, index: usize) {
        self.occupancy[index] = SensorState::Vacant;
    }

    pub fn clear(&mut self) {
        self.occupancy.fill(SensorState::Vacant);
    }
}

/// One vehicle passing over one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub lane: usize,
    pub position_m: f64,
    pub enter_s: f64,
    pub exit_s: Option<f64>,
}

/// Checks that no two detections at the same sensor overlap in time.
pub fn check_non_overlapping(detections: &[DetectionEvent]) -> Result<(), SensingError> {
    let mut sorted: Vec<&DetectionEvent> = detections.iter().collect();
    sorted.sort_by(|a, b| {
        (a.lane, a.position_m.to_bits())
            .cmp(&(b.lane, b.position_m.to_bits()))
            .then(a.enter_s.total_cmp(&b.enter_s))
    });
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.lane != b.lane || a.position_m != b.position_m {
            continue;
        }
        match a.exit_s {
            Some(x) if x <= b.enter_s => {}
            _ => {
                return Err(SensingError::Overlap { lane: a.lane, position_m: a.position_m, time_s: b.enter_s });
            }
        }
    }
    Ok(())
}

pub fn estimate_speed(t_first_s: f64, t_second_s: f64, spacing_m: f64) -> Result<f64, SensingError> {
    if !(spacing_m > 0.0) {
        return Err(SensingError::InvalidSpacing(spacing_m));
    }
    let dt = t_second_s - t_first_s;
    if !(dt > 0.0) {
        return Err(SensingError::NonCausalPair { first: t_first_s, second: t_second_s });
    }
    Ok(spacing_m / dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JamAlarm {
    pub lane: usize,
    pub position_m: f64,
    pub occupied_for_s: f64,
}

/// Reports a jam when a sensor has been occupied for longer than
/// `threshold_s` while the lane is green. `green_since_s` is `None` on red.
pub fn detect_jam(
    array: &LaneSensorArray,
    now_s: f64,
    threshold_s: f64,
    green_since_s: Option<f64>,
) -> Result<Option<JamAlarm>, SensingError> {
    if !(threshold_s > 0.0) {
        return Err(SensingError::InvalidThreshold(threshold_s));
    }
    let Some(green) = green_since_s else {
        return Ok(None);
    };
    for (k, s) in array.occupancy.iter().enumerate() {
        if let SensorState::Occupied { since_s } = *s {
            let held = now_s - since_s.max(green);
            if held > threshold_s {
                return Ok(Some(JamAlarm { lane: array.lane, position_m: array.positions_m[k], occupied_for_s: held }));
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    A,
    B,
}

/// Fenced waiting area on one side of a crossing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PedestrianArea {
    pub crossing: usize,
    pub side: Side,
    waiting: u32,
    pub capacity: u32,
}

impl PedestrianArea {
    pub fn new(crossing: usize, side: Side, capacity: u32) -> Self {
        PedestrianArea { crossing, side, waiting: 0, capacity }
    }

    pub fn waiting(&self) -> u32 {
        self.waiting
    }

    /// Adds arrivals and returns how many did not fit.
    pub fn arrive(&mut self, count: u32) -> u32 {
        let room = self.capacity - self.waiting;
        let admitted = count.min(room);
        self.waiting += admitted;
        count - admitted
    }

    /// Everyone leaves; returns how many were waiting.
    pub fn release(&mut self) -> u32 {
        std::mem::take(&mut self.waiting)
    }
}

pub fn pedestrian_wait_count(a: &PedestrianArea, b: &PedestrianArea) -> Result<u32, SensingError> {
    if a.crossing != b.crossing {
        return Err(SensingError::MismatchedCrossing(a.crossing, b.crossing));
    }
    Ok(a.waiting + b.waiting)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmergencyBeacon {
    pub approach: usize,
    pub timestamp_s: f64,
}

/// Round-robin reporting slots: node `k` transmits at `k * period / nodes`
/// into every period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportingSchedule {
    pub nodes: usize,
    pub period_s: f64,
}

pub fn reporting_schedule(nodes: usize, period_s: f64) -> Result<ReportingSchedule, SensingError> {
    if nodes == 0 || !(period_s > 0.0) || !period_s.is_finite() {
        return Err(SensingError::InvalidThreshold(period_s));
    }
    Ok(ReportingSchedule { nodes, period_s })
}

impl ReportingSchedule {
    pub fn slot_len_s(&self) -> f64 {
        self.period_s / self.nodes as f64
    }

    pub fn offsets(&self) -> Vec<f64> {
        (0..self.nodes).map(|k| k as f64 * self.slot_len_s()).collect()
    }

    /// Transmission instant of `node` in period `cycle`.
    pub fn slot_time(&self, node: usize, cycle: u64) -> f64 {
        cycle as f64 * self.period_s + node as f64 * self.slot_len_s()
    }

    /// Transmissions with time in `(t0, t1]`, in time order.
    pub fn transmissions_in(&self, t0: f64, t1: f64) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        if t1 <= t0 {
            return out;
        }
        let slot = self.slot_len_s();
        let first = (t0 / slot).floor().max(0.0) as u64;
        let last = (t1 / slot).floor() as u64;
        for s in first..=last {
            let cycle = s / self.nodes as u64;
            let node = (s % self.nodes as u64) as usize;
            let t = self.slot_time(node, cycle);
            if t > t0 && t <= t1 {
                out.push((t, node));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn speed_from_pairs() {
        assert_eq!(estimate_speed(0.0, 1.0, 4.0).unwrap(), 4.0);
        assert!((estimate_speed(0.0, 4.0 / 7.0, 4.0).unwrap() - 7.0).abs() < 1e-12);
        assert!(estimate_speed(1.0, 1.0, 4.0).is_err());
        assert!(estimate_speed(2.0, 1.0, 4.0).is_err());
    }

    #[test]
    fn layouts() {
        assert_eq!(layout_sensors(200.0, 4.0).unwrap().len(), 51);
        assert_eq!(layout_sensors(0.0, 4.0).unwrap().positions_m, vec![0.0]);
        assert_eq!(layout_sensors(10.0, 3.0).unwrap().positions_m, vec![0.0, 3.0, 6.0, 9.0]);
        assert!(layout_sensors(10.0, 0.0).is_err());
        assert!(layout_sensors(10.0, -1.0).is_err());
    }

    #[test]
    fn jam_only_on_green() {
        let mut a = layout_sensors(20.0, 4.0).unwrap();
        assert_eq!(detect_jam(&a, 100.0, 60.0, Some(0.0)).unwrap(), None);
        a.occupy(2, 0.0);
        let j = detect_jam(&a, 61.0, 60.0, Some(0.0)).unwrap().unwrap();
        assert_eq!(j.position_m, 8.0);
        assert_eq!(detect_jam(&a, 61.0, 60.0, None).unwrap(), None);
        // queued through the red, green only 30 s old
        assert_eq!(detect_jam(&a, 61.0, 60.0, Some(31.0)).unwrap(), None);
        assert!(detect_jam(&a, 61.0, 0.0, Some(0.0)).is_err());
    }

    #[test]
    fn stop_and_go_below_threshold() {
        // occupancy intervals of a vehicle inching forward: each sensor is
        // held for at most 59.9 s
        let mut a = layout_sensors(8.0, 4.0).unwrap();
        let intervals = [(0.0, 59.9), (59.9, 119.8), (119.8, 179.7)];
        for (k, &(enter, exit)) in intervals.iter().enumerate() {
            a.occupy(k, enter);
            let mut t = enter;
            while t < exit {
                assert_eq!(detect_jam(&a, t, 60.0, Some(0.0)).unwrap(), None);
                t += 0.1;
            }
            a.vacate(k);
        }
    }

    #[test]
    fn pedestrian_counts() {
        let mut a = PedestrianArea::new(1, Side::A, 10);
        let mut b = PedestrianArea::new(1, Side::B, 10);
        assert_eq!(pedestrian_wait_count(&a, &b).unwrap(), 0);
        a.arrive(3);
        b.arrive(4);
        assert_eq!(pedestrian_wait_count(&a, &b).unwrap(), 7);
        assert_eq!(a.arrive(20), 13);
        assert_eq!(a.waiting(), 10);
        assert_eq!(pedestrian_wait_count(&a, &b).unwrap(), 14);
        let c = PedestrianArea::new(2, Side::B, 10);
        assert!(pedestrian_wait_count(&a, &c).is_err());
        assert_eq!(a.release(), 10);
        assert_eq!(a.waiting(), 0);
    }

    #[test]
    fn schedule_offsets() {
        assert_eq!(reporting_schedule(4, 1.0).unwrap().offsets(), vec![0.0, 0.25, 0.5, 0.75]);
        let s = reporting_schedule(1, 5.0).unwrap();
        assert_eq!(s.offsets(), vec![0.0]);
        assert_eq!(s.transmissions_in(0.0, 15.0), vec![(5.0, 0), (10.0, 0), (15.0, 0)]);
        assert!(reporting_schedule(0, 1.0).is_err());
    }

    #[test]
    fn overlapping_detections_are_caught() {
        let d = |enter, exit| DetectionEvent { lane: 0, position_m: 4.0, enter_s: enter, exit_s: exit };
        assert!(check_non_overlapping(&[d(0.0, Some(1.0)), d(1.0, Some(2.0))]).is_ok());
        assert!(check_non_overlapping(&[d(0.0, Some(1.5)), d(1.0, Some(2.0))]).is_err());
        assert!(check_non_overlapping(&[d(0.0, None), d(1.0, Some(2.0))]).is_err());
    }

    proptest! {
        #[test]
        fn slots_never_collide(nodes in 1usize..40, period in 0.1..20.0f64, cycles in 1u64..5) {
            let s = reporting_schedule(nodes, period).unwrap();
            let mut times: Vec<f64> = (0..cycles)
                .flat_map(|c| (0..nodes).map(move |k| s.slot_time(k, c)))
                .collect();
            times.sort_by(f64::total_cmp);
            for w in times.windows(2) {
                prop_assert!(w[1] - w[0] > s.slot_len_s() * 0.5);
            }
        }

        #[test]
        fn transmissions_cover_each_slot_once(nodes in 1usize..10, period in 0.5..10.0f64, split in 0.0..1.0f64) {
            let s = reporting_schedule(nodes, period).unwrap();
            let end = 3.0 * period;
            let mid = split * end;
            let mut all = s.transmissions_in(-1.0, mid);
            all.extend(s.transmissions_in(mid, end));
            let whole = s.transmissions_in(-1.0, end);
            prop_assert_eq!(all, whole);
        }
    }
}
