use super::{queue_length, AggregationConfig, AggregationError, LaneAggregate, LightColor};
use crate::sensing::{estimate_speed, LaneSensorArray};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Det {
    enter: f64,
    exit: Option<f64>,
}

/// Detections of one lane, indexed per sensor.
///
/// Vehicles cannot overtake inside a lane, so the `k`-th detection at every
/// sensor belongs to the same vehicle.
#[derive(Debug, Clone)]
pub struct LaneTrace {
    template: LaneSensorArray,
    cfg: AggregationConfig,
    sensors: Vec<Vec<Det>>,
    /// Earliest time each vehicle was seen stopped, once known.
    onset: Vec<Option<f64>>,
}

impl LaneTrace {
    pub fn new(layout: &LaneSensorArray, cfg: AggregationConfig) -> Self {
        let mut template = layout.clone();
        template.clear();
        LaneTrace {
            sensors: vec![Vec::new(); template.len()],
            template,
            cfg,
            onset: Vec::new(),
        }
    }

    pub fn lane(&self) -> usize {
        self.template.lane
    }

    pub fn layout(&self) -> &LaneSensorArray {
        &self.template
    }

    fn note_onset(&mut self, vehicle: usize, t: f64) {
        if self.onset.len() <= vehicle {
            self.onset.resize(vehicle + 1, None);
        }
        let slot = &mut self.onset[vehicle];
        *slot = Some(slot.map_or(t, |o| o.min(t)));
    }

    pub fn push_enter(&mut self, sensor: usize, t: f64) -> Result<(), AggregationError> {
        let lane = self.lane();
        let dets = self.sensors.get_mut(sensor).ok_or(AggregationError::UnknownSensor { lane, sensor })?;
        if let Some(last) = dets.last() {
            match last.exit {
                Some(x) if x <= t => {}
                _ => return Err(AggregationError::OutOfOrder { lane, sensor, time_s: t }),
            }
        }
        dets.push(Det { enter: t, exit: None });
        Ok(())
    }

    pub fn push_exit(&mut self, sensor: usize, t: f64) -> Result<(), AggregationError> {
        let lane = self.lane();
        let dets = self.sensors.get_mut(sensor).ok_or(AggregationError::UnknownSensor { lane, sensor })?;
        let k = dets.len().wrapping_sub(1);
        match dets.last_mut() {
            Some(d) if d.exit.is_none() && d.enter <= t => d.exit = Some(t),
            _ => return Err(AggregationError::OutOfOrder { lane, sensor, time_s: t }),
        }
        let enter = dets[k].enter;
        let tau = self.cfg.stop_dwell_s();
        if t - enter >= tau {
            self.note_onset(k, enter + tau);
        }
        Ok(())
    }

    /// Settles onsets of vehicles still parked over a sensor at `known_until`.
    fn settle_open(&mut self, known_until: f64) {
        let tau = self.cfg.stop_dwell_s();
        let mut found = Vec::new();
        for dets in &self.sensors {
            if let Some(d) = dets.last() {
                if d.exit.is_none() && d.enter + tau <= known_until {
                    found.push((dets.len() - 1, d.enter + tau));
                }
            }
        }
        for (k, t) in found {
            self.note_onset(k, t);
        }
    }

    /// Sensor occupancy at `t`, using the half-open rule `enter <= t < exit`.
    pub fn snapshot(&self, t: f64) -> LaneSensorArray {
        let mut array = self.template.clone();
        for (i, dets) in self.sensors.iter().enumerate() {
            let k = dets.partition_point(|d| d.enter <= t);
            if k > 0 {
                let d = dets[k - 1];
                if d.exit.is_none_or(|x| x > t) {
                    array.occupy(i, d.enter);
                }
            }
        }
        array
    }

    /// Vehicles between the far sensor and the stop line at `t`.
    pub fn vehicles_present(&self, t: f64) -> u32 {
        let Some(far) = self.sensors.last() else { return 0 };
        let entered = far.partition_point(|d| d.enter <= t);
        let left = self.sensors[0].iter().take_while(|d| d.exit.is_some_and(|x| x <= t)).count();
        entered.saturating_sub(left) as u32
    }

    /// Aggregates `[t0, t1)`. Detections reported so far are assumed complete
    /// up to `known_until`.
    pub fn aggregate(
        &mut self,
        light: LightColor,
        t0: f64,
        t1: f64,
        known_until: f64,
    ) -> Result<LaneAggregate, AggregationError> {
        if !(t1 > t0) {
            return Err(AggregationError::EmptyWindow { t0, t1 });
        }
        let spacing = self.template.spacing_m;
        let (cars, avg_speed_mps) = match light {
            LightColor::Green => {
                let mut count = 0u32;
                let mut sum = 0.0;
                let mut speeds = 0u32;
                for (k, d) in self.sensors[0].iter().enumerate() {
                    let Some(e0) = d.exit else { continue };
                    if e0 < t0 || e0 >= t1 {
                        continue;
                    }
                    count += 1;
                    let e1 = self.sensors.get(1).and_then(|s| s.get(k)).and_then(|d| d.exit);
                    if let Some(v) = e1.and_then(|e1| estimate_speed(e1, e0, spacing).ok()) {
                        sum += v;
                        speeds += 1;
                    }
                }
                (count, (speeds > 0).then(|| sum / speeds as f64))
            }
            LightColor::Red => {
                self.settle_open(known_until);
                let joined = self.onset.iter().flatten().filter(|&&o| o >= t0 && o < t1).count();
                (joined as u32, None)
            }
        };
        let queue_length_m = queue_length(
            &self.snapshot(t1),
            t1,
            self.cfg.stopped_speed_mps,
            self.cfg.footprint_m,
        );
        Ok(LaneAggregate {
            lane: self.lane(),
            window_start_s: t0,
            window_len_s: t1 - t0,
            light,
            cars,
            avg_speed_mps,
            queue_length_m,
            vehicles_present: self.vehicles_present(t1),
        })
    }
}
