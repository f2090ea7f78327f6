//! Synthetic detection trace for the per-lane aggregation table.
//!
//! One lane, sensors every metre from the stop line to 200 m, and a queue
//! that discharges in three green windows and refills in three red windows.
//! Vehicles are rigid footprints moving along piecewise-linear trajectories.

use crate::aggregation::{AggregationConfig, LightColor};
use crate::sensing::{layout_sensors, DetectionEvent, LaneSensorArray};

pub const SAMPLE_EPOCH: &str = "12:23:40.00";
pub const SAMPLE_LANE: usize = 0;

/// `(start_s, end_s, light)` for the six rows, relative to the epoch.
pub const SAMPLE_WINDOWS: [(f64, f64, LightColor); 6] = [
    (7.55, 12.55, LightColor::Green),
    (12.55, 17.76, LightColor::Green),
    (17.76, 19.80, LightColor::Green),
    (19.80, 25.05, LightColor::Red),
    (25.05, 30.07, LightColor::Red),
    (30.07, 35.01, LightColor::Red),
];

pub fn sample_layout() -> LaneSensorArray {
    layout_sensors(200.0, 1.0).expect("valid layout").with_lane(SAMPLE_LANE)
}

/// One-metre footprint, stopped below 2 m/s, i.e. a 0.5 s dwell.
pub fn sample_config() -> AggregationConfig {
    AggregationConfig { window_len_s: 5.0, stopped_speed_mps: 2.0, footprint_m: 1.0 }
}

#[derive(Debug, Clone)]
struct Vehicle {
    len: f64,
    /// `(t, front position)`, time increasing, position non-increasing.
    keys: Vec<(f64, f64)>,
}

impl Vehicle {
    fn pos(&self) -> f64 {
        self.keys.last().expect("keyed").1
    }

    fn move_by(&mut self, from_s: f64, speed: f64, dist: f64) {
        let x = self.pos();
        self.keys.push((from_s, x));
        self.keys.push((from_s + dist / speed, x - dist));
    }

    /// First time the point `offset` metres behind the front reaches `p`.
    fn reach(&self, p: f64, offset: f64) -> Option<f64> {
        let (t0, x0) = self.keys[0];
        if x0 + offset <= p {
            return Some(t0);
        }
        for w in self.keys.windows(2) {
            let ((ta, xa), (tb, xb)) = (w[0], w[1]);
            let (ya, yb) = (xa + offset, xb + offset);
            if yb <= p && ya > p {
                return Some(ta + (ya - p) * (tb - ta) / (ya - yb));
            }
        }
        None
    }

    fn detections(&self, layout: &LaneSensorArray) -> Vec<DetectionEvent> {
        layout
            .positions_m
            .iter()
            .filter_map(|&p| {
                let enter_s = self.reach(p, 0.0)?;
                Some(DetectionEvent { lane: layout.lane, position_m: p, enter_s, exit_s: self.reach(p, self.len) })
            })
            .collect()
    }
}

/// Every vehicle enters past the far sensor so that the `k`-th detection
/// at each sensor is the `k`-th vehicle of the lane.
const ENTRY_M: f64 = 250.0;

struct Script {
    vehicles: Vec<Vehicle>,
    next_entry_s: f64,
}

impl Script {
    /// Drives in behind the previous vehicle, 0.3 s apart, and stops.
    fn park(&mut self, len: f64, front_m: f64) -> usize {
        let start = self.next_entry_s;
        self.next_entry_s += 0.3;
        let stop = start + (ENTRY_M - front_m) / 20.0;
        self.vehicles.push(Vehicle { len, keys: vec![(start, ENTRY_M), (stop, front_m)] });
        self.vehicles.len() - 1
    }

    /// Drives in at 20 m/s and stops with its front at `stop_m` at `stop_s`.
    fn arrive(&mut self, len: f64, stop_m: f64, stop_s: f64) -> usize {
        let start = stop_s - (ENTRY_M - stop_m) / 20.0;
        self.vehicles.push(Vehicle { len, keys: vec![(start, ENTRY_M), (stop_s, stop_m)] });
        self.vehicles.len() - 1
    }

    fn group(&mut self, lens: &[f64], front_m: f64) -> (Vec<usize>, f64) {
        let mut x = front_m;
        let ids = lens
            .iter()
            .map(|&l| {
                let id = self.park(l, x);
                x += l;
                id
            })
            .collect();
        (ids, x)
    }

    fn shift(&mut self, ids: &[usize], from_s: f64, speed: f64, dist: f64) {
        for &i in ids {
            self.vehicles[i].move_by(from_s, speed, dist);
        }
    }
}

fn platoon(front: f64, rest: usize) -> Vec<f64> {
    std::iter::once(front).chain(std::iter::repeat_n(1.0, rest)).collect()
}

/// Vehicles of footprint 5 and 3 filling `[0, 159)` with boundaries at the
/// marks where the tail queue is later split.
fn tail_lengths() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut mark = 0.0;
    for (fives, threes) in [(6, 0), (6, 0), (10, 1), (1, 1), (7, 1)] {
        for l in std::iter::repeat_n(5.0, fives).chain(std::iter::repeat_n(3.0, threes)) {
            out.push((mark, l));
            mark += l;
        }
    }
    out
}

/// Generates the trace whose aggregation reproduces the reference rows.
pub fn sample_trace() -> Vec<DetectionEvent> {
    let mut s = Script { vehicles: Vec::new(), next_entry_s: -60.0 };
    let (g1, x) = s.group(&platoon(2.0, 18), 0.0);
    let (g2, x) = s.group(&platoon(2.0, 25), x);
    let (g3, x) = s.group(&platoon(3.0, 11), x);
    let tail = tail_lengths();
    let lens: Vec<f64> = tail.iter().map(|t| t.1).collect();
    let (y, _) = s.group(&lens, x);
    let seg = |lo: f64, hi: f64| -> Vec<usize> {
        y.iter().zip(&tail).filter(|(_, t)| t.0 >= lo && t.0 < hi).map(|(&i, _)| i).collect()
    };
    let all = |parts: &[&Vec<usize>]| parts.iter().flat_map(|p| p.iter().copied()).collect::<Vec<_>>();

    // first green: G1 leaves at 7 m/s, everyone moves up 20 m
    s.shift(&all(&[&g1, &g2, &g3, &y]), 7.55, 7.0, 20.0);
    s.shift(&g1, 7.55 + 20.0 / 7.0, 7.0, 100.0);

    // second green: G2 leaves at 10 m/s; the tail past 113 m stops one metre short
    s.shift(&all(&[&g2, &g3, &seg(0.0, 113.0)]), 12.55, 10.0, 27.0);
    s.shift(&seg(113.0, 159.0), 12.55, 10.0, 26.0);
    s.shift(&g2, 12.55 + 2.7, 10.0, 100.0);

    // third green: G3 leaves at 13 m/s; a gap opens at 30 m
    s.shift(&all(&[&g3, &seg(0.0, 30.0)]), 17.76, 13.0, 14.0);
    s.shift(&seg(30.0, 159.0), 17.76, 13.0, 13.0);
    s.shift(&g3, 17.76 + 14.0 / 13.0, 13.0, 100.0);

    // first red: the gap moves back to 60 m, 15 arrivals
    s.shift(&seg(30.0, 60.0), 20.0, 1.0, 1.0);
    let j4: Vec<usize> = (0..15).map(|j| s.arrive(1.0, 161.0 + j as f64, 20.0 + 0.3 * j as f64)).collect();

    // second red: the queue closes up to 121 m, 13 arrivals
    s.shift(&seg(60.0, 113.0), 25.5, 1.0, 1.0);
    s.shift(&seg(113.0, 121.0), 25.5, 2.0, 2.0);
    for j in 0..13 {
        s.arrive(1.0, 176.0 + j as f64, 25.5 + 0.3 * j as f64);
    }

    // third red: the rest of the tail and the first arrival move up, 7 arrivals
    s.shift(&seg(121.0, 159.0), 30.5, 2.0, 2.0);
    s.shift(&j4[..1], 31.6, 2.0, 2.0);
    for j in 0..7 {
        s.arrive(1.0, 189.0 + j as f64, 30.5 + 0.3 * j as f64);
    }

    let layout = sample_layout();
    let mut out: Vec<DetectionEvent> = s.vehicles.iter().flat_map(|v| v.detections(&layout)).collect();
    out.sort_by(|a, b| a.position_m.total_cmp(&b.position_m).then(a.enter_s.total_cmp(&b.enter_s)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::check_non_overlapping;

    #[test]
    fn tail_marks_are_vehicle_boundaries() {
        let tail = tail_lengths();
        let marks: Vec<f64> = tail.iter().map(|t| t.0).collect();
        for m in [30.0, 60.0, 113.0, 121.0] {
            assert!(marks.contains(&m), "{m}");
        }
        let (last, l) = *tail.last().unwrap();
        assert_eq!(last + l, 159.0);
    }

    #[test]
    fn trace_is_physical() {
        let trace = sample_trace();
        check_non_overlapping(&trace).unwrap();
        assert!(trace.iter().all(|d| d.position_m >= 0.0 && d.position_m <= 200.0));
    }
}
