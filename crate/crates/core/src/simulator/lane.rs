//! One approach lane: vehicles, stop-line discharge and sensor crossings.

use std::collections::VecDeque;

use super::VehicleParams;
use crate::aggregation::{SensorEdge, SensorMessage};
use crate::sensing::LaneSensorArray;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleState {
    Approaching,
    Queued,
    Discharging,
    Departed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleAgent {
    pub id: u64,
    pub movement: usize,
    pub arrival_s: f64,
    /// Front bumper, metres upstream of the stop line; negative once past.
    pub position_m: f64,
    pub speed_mps: f64,
    pub state: VehicleState,
    pub span_entry_s: Option<f64>,
    pub crossed_s: Option<f64>,
    broken_until_s: Option<f64>,
}

/// A vehicle passing the stop line.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub vehicle: u64,
    pub arrival_s: f64,
    pub time_s: f64,
    pub span_entry_s: Option<f64>,
}

/// Number of departures `L + k * h < g` from a standing queue during a
/// green of `green_s` seconds.
pub fn discharge_model(queue_len: usize, green_elapsed_s: f64, startup_lost_s: f64, headway_s: f64) -> usize {
    if green_elapsed_s <= startup_lost_s {
        return 0;
    }
    let n = ((green_elapsed_s - startup_lost_s) / headway_s - EPS).ceil().max(0.0) as usize;
    n.min(queue_len)
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub movement: usize,
    params: VehicleParams,
    pub vehicles: VecDeque<VehicleAgent>,
    /// Arrived vehicles waiting for room to enter the modelled road.
    pub buffer: VecDeque<(u64, f64)>,
    pub sensors: LaneSensorArray,
    span_m: f64,
    last_departure_s: f64,
    pub green_since_s: Option<f64>,
    pub arrivals: u64,
    pub departures: u64,
}

impl Lane {
    pub fn new(movement: usize, sensors: LaneSensorArray, params: VehicleParams) -> Self {
        Lane {
            movement,
            params,
            vehicles: VecDeque::new(),
            buffer: VecDeque::new(),
            span_m: sensors.span_m(),
            sensors,
            last_departure_s: f64::NEG_INFINITY,
            green_since_s: None,
            arrivals: 0,
            departures: 0,
        }
    }

    pub fn spawn_position_m(&self) -> f64 {
        self.span_m + self.params.spawn_offset_m
    }

    fn detection_len(&self) -> f64 {
        self.params.length_m + self.params.min_gap_m
    }

    pub fn in_system(&self) -> u64 {
        (self.vehicles.iter().filter(|v| v.crossed_s.is_none()).count() + self.buffer.len()) as u64
    }

    pub fn arrive(&mut self, id: u64, t: f64) {
        self.arrivals += 1;
        self.buffer.push_back((id, t));
    }

    /// Moves buffered vehicles onto the road while there is room.
    pub fn spawn(&mut self) {
        let x = self.spawn_position_m();
        while let Some(&(id, arrival)) = self.buffer.front() {
            let room = self
                .vehicles
                .back()
                .is_none_or(|last| last.position_m + self.params.length_m + self.params.min_gap_m <= x + EPS);
            if !room {
                break;
            }
            self.buffer.pop_front();
            self.vehicles.push_back(VehicleAgent {
                id,
                movement: self.movement,
                arrival_s: arrival,
                position_m: x,
                speed_mps: self.params.desired_speed_mps,
                state: VehicleState::Approaching,
                span_entry_s: None,
                crossed_s: None,
                broken_until_s: None,
            });
        }
    }

    /// Stalls the vehicle closest to the stop line that has not crossed.
    pub fn break_down(&mut self, until_s: f64) -> Option<u64> {
        let v = self.vehicles.iter_mut().find(|v| v.crossed_s.is_none())?;
        v.broken_until_s = Some(until_s);
        Some(v.id)
    }

    /// Advances the lane over `[t, t + dt)`. `permitted` says whether
    /// vehicles may cross the stop line. Sensor edges are appended to
    /// `messages` in time order.
    pub fn step(&mut self, t: f64, dt: f64, permitted: bool, messages: &mut Vec<SensorMessage>) -> Vec<Crossing> {
        let p = self.params;
        let d_len = self.detection_len();
        let spacing = self.sensors.spacing_m;
        let n_sensors = self.sensors.len();
        let mut crossings = Vec::new();
        let mut edges: Vec<(f64, usize, SensorEdge)> = Vec::new();
        let mut leader_back: Option<f64> = None;

        for v in self.vehicles.iter_mut() {
            let x_old = v.position_m;
            let mut x_new = x_old - p.desired_speed_mps * dt;
            if v.broken_until_s.is_some_and(|u| t < u) {
                x_new = x_old;
            }
            let before_line = x_old >= 0.0;
            if before_line {
                let queued = matches!(v.state, VehicleState::Queued | VehicleState::Discharging);
                let may_cross = permitted
                    && self.green_since_s.is_some_and(|g| {
                        !queued
                            || (t + EPS >= g + p.startup_lost_s
                                && t + EPS >= self.last_departure_s + p.saturation_headway_s)
                    });
                if !may_cross {
                    x_new = x_new.max(0.0);
                }
            }
            if let Some(back) = leader_back {
                x_new = x_new.max(back);
            }
            x_new = x_new.min(x_old);
            let moved = x_old - x_new;
            v.speed_mps = moved / dt;
            v.position_m = x_new;
            leader_back = Some(x_new + p.length_m + p.min_gap_m);

            if moved <= EPS {
                if before_line {
                    v.state = VehicleState::Queued;
                }
                continue;
            }
            if v.state == VehicleState::Queued {
                v.state = VehicleState::Discharging;
            }
            let at = |pos: f64| t + dt * (x_old - pos) / moved;
            if x_old > self.span_m && x_new <= self.span_m {
                v.span_entry_s = Some(at(self.span_m));
            }
            if before_line && x_new < 0.0 {
                let tc = at(0.0);
                v.crossed_s = Some(tc);
                v.state = VehicleState::Departed;
                self.last_departure_s = tc;
                crossings.push(Crossing { vehicle: v.id, arrival_s: v.arrival_s, time_s: tc, span_entry_s: v.span_entry_s });
            }
            // front reaches sensors in [x_new, x_old)
            let first = (x_new / spacing).ceil().max(0.0) as usize;
            let mut k = first;
            while k < n_sensors && (k as f64) * spacing < x_old {
                edges.push((at(k as f64 * spacing), k, SensorEdge::Enter));
                k += 1;
            }
            // rear of the detection footprint clears sensors in [x_new + d, x_old + d)
            let first = ((x_new + d_len) / spacing).ceil().max(0.0) as usize;
            let mut k = first;
            while k < n_sensors && (k as f64) * spacing < x_old + d_len {
                edges.push((at(k as f64 * spacing - d_len), k, SensorEdge::Exit));
                k += 1;
            }
        }

        edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(time_s, sensor, edge) in &edges {
            match edge {
                SensorEdge::Enter => self.sensors.occupy(sensor, time_s),
                SensorEdge::Exit => self.sensors.vacate(sensor),
            }
            messages.push(SensorMessage { sensor, edge, time_s });
        }

        self.departures += crossings.len() as u64;
        while self.vehicles.front().is_some_and(|v| v.position_m + d_len <= 0.0) {
            self.vehicles.pop_front();
        }
        crossings
    }

    /// Ground-truth check that vehicles keep their order and spacing.
    pub fn check_spacing(&self) -> Result<(), String> {
        for w in self.vehicles.iter().collect::<Vec<_>>().windows(2) {
            let need = w[0].position_m + self.params.length_m + self.params.min_gap_m;
            if w[1].position_m + 1e-6 < need {
                return Err(format!(
                    "vehicle {} at {:.3} m overlaps vehicle {} at {:.3} m",
                    w[1].id, w[1].position_m, w[0].id, w[0].position_m
                ));
            }
        }
        Ok(())
    }
}
