//! Fixed-tick microsimulation of one crossroad with the sensing, aggregation
//! and control layers running in the loop.

mod fixed_time;
mod lane;
mod report;

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::aggregation::{
    queue_length, AccessPoint, AggregationConfig, AggregationError, CongestionEvent, LaneAggregate, LightColor,
    NodeReport, PedestrianAggregate, SensorMessage,
};
use crate::control::{
    ControlError, ControllerConfig, DecisionRecord, DecisionUnit, FitnessWeights, SignalChange,
};
use crate::sensing::{
    detect_jam, layout_sensors, reporting_schedule, EmergencyBeacon, JamAlarm, PedestrianArea, SensingError, Side,
};
use crate::topology::{
    build_conflict_graph, enumerate_events, ConflictGraph, CrossroadTopology, EventKind, EventSet, GraphError,
    TopologyError,
};

pub use fixed_time::{fixed_phase_plan, FixedTimeController};
pub use lane::{discharge_model, Crossing, Lane, VehicleAgent, VehicleState};
pub use report::{write_decisions_csv, write_event_log, write_metrics_csv, ReportError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invariant violated at t = {time_s:.1} s: {message}")]
    Invariant { time_s: f64, message: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub desired_speed_mps: f64,
    pub length_m: f64,
    pub min_gap_m: f64,
    pub startup_lost_s: f64,
    pub saturation_headway_s: f64,
    /// Vehicles appear this far upstream of the first sensor.
    pub spawn_offset_m: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            desired_speed_mps: 13.9,
            length_m: 5.0,
            min_gap_m: 1.0,
            startup_lost_s: 2.0,
            saturation_headway_s: 2.0,
            spawn_offset_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianParams {
    pub crossing_width_m: f64,
    pub walking_speed_mps: f64,
    pub area_capacity: u32,
}

impl Default for PedestrianParams {
    fn default() -> Self {
        PedestrianParams { crossing_width_m: 12.0, walking_speed_mps: 1.2, area_capacity: 40 }
    }
}

/// Arrival rates and scripted emergencies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemandProfile {
    /// One rate per event position (veh/s); pedestrian positions are ignored.
    pub vehicle_rates: Vec<f64>,
    /// One rate per crossing (ped/s), split evenly over both sides.
    pub pedestrian_rates: Vec<f64>,
    pub emergencies: Vec<EmergencyBeacon>,
}

impl DemandProfile {
    pub fn uniform(events: &EventSet, crossings: usize, vehicle_rate: f64, pedestrian_rate: f64) -> Self {
        let vehicle_rates =
            (0..events.len()).map(|i| if events.kind(i).is_vehicle() { vehicle_rate } else { 0.0 }).collect();
        DemandProfile { vehicle_rates, pedestrian_rates: vec![pedestrian_rate; crossings], emergencies: Vec::new() }
    }

    fn validate(&self, events: &EventSet, crossings: usize) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.vehicle_rates.len() != events.len() {
            return bad(format!("{} vehicle rates for {} events", self.vehicle_rates.len(), events.len()));
        }
        if self.pedestrian_rates.len() != crossings {
            return bad(format!("{} pedestrian rates for {} crossings", self.pedestrian_rates.len(), crossings));
        }
        for (i, &r) in self.vehicle_rates.iter().enumerate() {
            if !(r >= 0.0) || !r.is_finite() {
                return bad(format!("vehicle rate for {} must be finite and non-negative", events.label(i)));
            }
        }
        for (c, &r) in self.pedestrian_rates.iter().enumerate() {
            if !(r >= 0.0) || !r.is_finite() {
                return bad(format!("pedestrian rate for C{} must be finite and non-negative", c + 1));
            }
        }
        for b in &self.emergencies {
            if !(b.timestamp_s >= 0.0) {
                return bad("emergency timestamps must be non-negative".into());
            }
        }
        Ok(())
    }

    fn demanded(&self, events: &EventSet) -> Vec<usize> {
        (0..events.len())
            .filter(|&i| match events.kind(i) {
                EventKind::Vehicle { .. } => self.vehicle_rates[i] > 0.0,
                EventKind::Pedestrian { crossing } => self.pedestrian_rates[crossing - 1] > 0.0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlSpec {
    Adaptive { config: ControllerConfig, weights: FitnessWeights },
    FixedTime { green_s: f64, countdown_lead_s: f64, phases: Option<Vec<BTreeSet<usize>>> },
}

/// A vehicle stalls at `at_s` for `duration_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakdown {
    pub movement: usize,
    pub at_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub topology: CrossroadTopology,
    pub exclude_u_turns: bool,
    /// Replaces the geometric conflict graph when set.
    pub conflict_graph: Option<ConflictGraph>,
    pub demand: DemandProfile,
    pub control: ControlSpec,
    pub seed: u64,
    pub tick_s: f64,
    pub duration_s: f64,
    pub radio_drop_probability: f64,
    pub reporting_period_s: f64,
    pub vehicle: VehicleParams,
    pub pedestrian: PedestrianParams,
    pub aggregation: AggregationConfig,
    pub jam_threshold_s: f64,
    pub congestion_threshold_m: Option<f64>,
    pub breakdowns: Vec<Breakdown>,
}

impl SimConfig {
    /// Adaptive control, zero demand, one hour.
    pub fn new(topology: CrossroadTopology, seed: u64) -> Self {
        let events = enumerate_events(&topology, true);
        let demand = DemandProfile::uniform(&events, topology.crossings, 0.0, 0.0);
        SimConfig {
            topology,
            exclude_u_turns: true,
            conflict_graph: None,
            demand,
            control: ControlSpec::Adaptive { config: ControllerConfig::default(), weights: FitnessWeights::default() },
            seed,
            tick_s: 0.1,
            duration_s: 3600.0,
            radio_drop_probability: 0.0,
            reporting_period_s: 1.0,
            vehicle: VehicleParams::default(),
            pedestrian: PedestrianParams::default(),
            aggregation: AggregationConfig::default(),
            jam_threshold_s: 60.0,
            congestion_threshold_m: Some(100.0),
            breakdowns: Vec::new(),
        }
    }

    pub fn events(&self) -> EventSet {
        enumerate_events(&self.topology, self.exclude_u_turns)
    }

    pub fn countdown_lead_s(&self) -> f64 {
        match &self.control {
            ControlSpec::Adaptive { config, .. } => config.countdown_lead_s,
            ControlSpec::FixedTime { countdown_lead_s, .. } => *countdown_lead_s,
        }
    }

    pub fn validate(&self) -> Result<(EventSet, ConflictGraph), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        self.topology.validate()?;
        if !(self.tick_s > 0.0) || !self.tick_s.is_finite() {
            return bad("tick_s must be positive");
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return bad("duration_s must be positive");
        }
        if !(0.0..=1.0).contains(&self.radio_drop_probability) {
            return bad("radio drop probability must lie in [0, 1]");
        }
        if !(self.reporting_period_s > 0.0) {
            return bad("reporting period must be positive");
        }
        if !(self.jam_threshold_s > 0.0) {
            return bad("jam threshold must be positive");
        }
        let v = &self.vehicle;
        let all_positive = [v.desired_speed_mps, v.length_m, v.saturation_headway_s, v.spawn_offset_m]
            .iter()
            .all(|x| *x > 0.0 && x.is_finite());
        if !all_positive || !(v.min_gap_m >= 0.0) || !(v.startup_lost_s >= 0.0) {
            return bad("vehicle parameters must be positive");
        }
        if v.spawn_offset_m <= v.length_m + v.min_gap_m {
            return bad("spawn offset must exceed one vehicle footprint");
        }
        let p = &self.pedestrian;
        if !(p.crossing_width_m > 0.0) || !(p.walking_speed_mps > 0.0) {
            return bad("pedestrian parameters must be positive");
        }
        self.aggregation.validate()?;
        let events = self.events();
        self.demand.validate(&events, self.topology.crossings)?;
        let graph = match &self.conflict_graph {
            Some(g) if g.len() != events.len() => {
                return Err(SimError::InvalidConfig(format!(
                    "conflict graph has {} events, topology has {}",
                    g.len(),
                    events.len()
                )))
            }
            Some(g) => g.clone(),
            None => build_conflict_graph(&self.topology, &events)?,
        };
        for b in &self.breakdowns {
            if b.movement >= events.len() || !events.kind(b.movement).is_vehicle() {
                return bad("breakdown must name a vehicle movement");
            }
        }
        match &self.control {
            ControlSpec::Adaptive { config, .. } => config.validate()?,
            ControlSpec::FixedTime { green_s, countdown_lead_s, phases } => {
                if !(*green_s > 0.0) || !(*countdown_lead_s >= 0.0) {
                    return bad("fixed-time green must be positive and lead non-negative");
                }
                for p in phases.iter().flatten() {
                    let set: Vec<usize> = p.iter().copied().collect();
                    if !graph.is_compatible_set(&set)? {
                        return bad("fixed-time phase contains conflicting events");
                    }
                }
            }
        }
        Ok((events, graph))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub tick: u64,
    pub entity: String,
    pub event: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleRecord {
    pub id: u64,
    pub movement: usize,
    pub arrival_s: f64,
    pub span_entry_s: Option<f64>,
    pub crossed_s: f64,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub seed: u64,
    pub duration_s: f64,
    /// Mean over departed vehicles of span length / time spent in the span.
    pub avg_intersection_speed_mps: f64,
    pub mean_wait_s: Vec<f64>,
    pub max_wait_s: Vec<f64>,
    /// Longest unbroken red per event.
    pub max_red_s: Vec<f64>,
    pub max_queue_m: Vec<f64>,
    pub throughput: u64,
    pub arrivals: u64,
    pub mean_vehicle_wait_s: f64,
    pub pedestrian_mean_wait_s: f64,
    pub pedestrians_served: u64,
    pub pedestrians_turned_away: u64,
    pub decisions: usize,
    pub rejected_messages: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: EventSet,
    pub metrics: SimMetrics,
    pub log: Vec<LogRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub signal_changes: Vec<SignalChange>,
    pub aggregates: Vec<LaneAggregate>,
    pub pedestrian_aggregates: Vec<PedestrianAggregate>,
    pub congestion_events: Vec<CongestionEvent>,
    pub jams: Vec<(f64, JamAlarm)>,
    pub vehicles: Vec<VehicleRecord>,
}

enum Controller {
    Adaptive(Box<DecisionUnit>),
    Fixed(FixedTimeController),
}

impl Controller {
    fn step(&mut self, now: f64, ap: &mut AccessPoint, beacons: &[EmergencyBeacon]) -> Option<SignalChange> {
        match self {
            Controller::Adaptive(u) => u.step(now, ap, beacons),
            Controller::Fixed(f) => f.step(now),
        }
    }

    fn current_green(&self) -> &BTreeSet<usize> {
        match self {
            Controller::Adaptive(u) => u.current_green(),
            Controller::Fixed(f) => f.current_green(),
        }
    }

    fn frozen(&self) -> BTreeSet<usize> {
        match self {
            Controller::Adaptive(u) => u.frozen(),
            Controller::Fixed(f) => f.frozen(),
        }
    }

    fn decisions(&self) -> &[DecisionRecord] {
        match self {
            Controller::Adaptive(u) => u.decisions(),
            Controller::Fixed(f) => f.decisions(),
        }
    }
}

struct PoissonStream {
    rng: ChaCha8Rng,
    gap: Option<Exp<f64>>,
    next_s: f64,
}

impl PoissonStream {
    fn new(seed: u64, stream: u64, rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let gap = (rate > 0.0).then(|| Exp::new(rate).expect("positive rate"));
        let next_s = gap.map_or(f64::INFINITY, |g| g.sample(&mut rng));
        PoissonStream { rng, gap, next_s }
    }

    /// Arrival times up to and including `t`.
    fn drain(&mut self, t: f64) -> Vec<f64> {
        let mut out = Vec::new();
        while self.next_s <= t {
            out.push(self.next_s);
            let g = self.gap.expect("finite arrival implies a rate");
            self.next_s += g.sample(&mut self.rng);
        }
        out
    }
}

struct Crosswalk {
    event: usize,
    areas: [PedestrianArea; 2],
    queues: [VecDeque<f64>; 2],
    streams: [PoissonStream; 2],
}

const PED_STREAM_BASE: u64 = 1 << 20;
const RADIO_STREAM: u64 = 1 << 30;

fn invariant(time_s: f64, message: String) -> SimError {
    SimError::Invariant { time_s, message }
}

/// Runs one simulation to completion.
pub fn run(config: &SimConfig) -> Result<SimOutput, SimError> {
    let (events, graph) = config.validate()?;
    let n = events.len();
    let dt = config.tick_s;
    let ticks = (config.duration_s / dt).round() as u64;
    let topo = &config.topology;
    let mut log = Vec::new();
    let mut push_log = |tick: u64, entity: String, event: &str, detail: String| {
        log.push(LogRecord { tick, entity, event: event.to_string(), detail });
    };

    let base_layout = layout_sensors(topo.sensor_span_m, topo.sensor_spacing_m)?;
    let vehicle_positions = events.vehicle_positions();
    let mut lanes: Vec<Lane> = vehicle_positions
        .iter()
        .map(|&i| Lane::new(i, base_layout.clone().with_lane(i), config.vehicle))
        .collect();
    let mut lane_of = vec![None; n];
    for (k, &i) in vehicle_positions.iter().enumerate() {
        lane_of[i] = Some(k);
    }
    let mut vehicle_streams: Vec<PoissonStream> = vehicle_positions
        .iter()
        .map(|&i| PoissonStream::new(config.seed, i as u64, config.demand.vehicle_rates[i]))
        .collect();
    let mut crosswalks: Vec<Crosswalk> = events
        .pedestrian_positions()
        .into_iter()
        .map(|i| {
            let EventKind::Pedestrian { crossing } = events.kind(i) else { unreachable!() };
            let rate = config.demand.pedestrian_rates[crossing - 1] / 2.0;
            let stream = |s: u64| PoissonStream::new(config.seed, PED_STREAM_BASE + 2 * crossing as u64 + s, rate);
            let cap = config.pedestrian.area_capacity;
            Crosswalk {
                event: i,
                areas: [PedestrianArea::new(crossing, Side::A, cap), PedestrianArea::new(crossing, Side::B, cap)],
                queues: [VecDeque::new(), VecDeque::new()],
                streams: [stream(0), stream(1)],
            }
        })
        .collect();
    let mut radio = ChaCha8Rng::seed_from_u64(config.seed);
    radio.set_stream(RADIO_STREAM);

    let layouts: Vec<_> = lanes.iter().map(|l| l.sensors.clone()).collect();
    let mut ap = AccessPoint::new(config.aggregation, &layouts, 0.0, config.congestion_threshold_m)?;
    let schedule = reporting_schedule(lanes.len() + crosswalks.len(), config.reporting_period_s)?;
    let mut node_buffers: Vec<Vec<SensorMessage>> = vec![Vec::new(); lanes.len()];

    let mut controller = match &config.control {
        ControlSpec::Adaptive { config: c, weights } => {
            Controller::Adaptive(Box::new(DecisionUnit::new(events.clone(), graph.clone(), c.clone(), *weights)?))
        }
        ControlSpec::FixedTime { green_s, countdown_lead_s, phases } => {
            let plan = phases.clone().unwrap_or_else(|| fixed_phase_plan(&graph, &config.demand.demanded(&events)));
            Controller::Fixed(FixedTimeController::new(plan, *green_s, *countdown_lead_s))
        }
    };

    let mut beacons = config.demand.emergencies.clone();
    beacons.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
    let mut beacons: VecDeque<EmergencyBeacon> = beacons.into();
    let mut breakdowns = config.breakdowns.clone();
    breakdowns.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
    let mut breakdowns: VecDeque<Breakdown> = breakdowns.into();

    let mut red_since: Vec<Option<f64>> = vec![Some(0.0); n];
    let mut max_red = vec![0.0f64; n];
    let mut max_queue = vec![0.0f64; n];
    let mut waits: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut jam_active = vec![false; lanes.len()];
    let mut jams = Vec::new();
    let mut vehicles = Vec::new();
    let mut signal_changes = Vec::new();
    let mut next_vehicle_id = 0u64;
    let mut turned_away = 0u64;
    let free_flow_s = (topo.sensor_span_m + config.vehicle.spawn_offset_m) / config.vehicle.desired_speed_mps;
    let crossing_time_s = config.pedestrian.crossing_width_m / config.pedestrian.walking_speed_mps;

    for tick in 0..ticks {
        let t = tick as f64 * dt;

        let mut due = Vec::new();
        while beacons.front().is_some_and(|b| b.timestamp_s <= t + 1e-9) {
            let b = beacons.pop_front().expect("front checked");
            push_log(tick, format!("approach:{}", b.approach), "beacon", format!("t={:.2}", b.timestamp_s));
            due.push(b);
        }
        if let Some(change) = controller.step(t, &mut ap, &due) {
            for i in 0..n {
                let was = change.from.contains(&i);
                let is = change.to.contains(&i);
                if was == is {
                    continue;
                }
                if is {
                    if let Some(since) = red_since[i].take() {
                        max_red[i] = max_red[i].max(t - since);
                    }
                } else {
                    red_since[i] = Some(t);
                }
                if let Some(k) = lane_of[i] {
                    lanes[k].green_since_s = is.then_some(t);
                    let color = if is { LightColor::Green } else { LightColor::Red };
                    ap.set_light(i, t, color)?;
                }
            }
            push_log(tick, "lights".into(), "switch", events.join_labels(&change.to));
            signal_changes.push(change);
        }
        let green = controller.current_green().clone();
        let set: Vec<usize> = green.iter().copied().collect();
        if !graph.is_compatible_set(&set)? {
            return Err(invariant(t, format!("conflicting green set {}", events.join_labels(&green))));
        }
        let frozen = controller.frozen();
        let permitted = |i: usize| green.contains(&i) && !frozen.contains(&i);

        while breakdowns.front().is_some_and(|b| b.at_s <= t + 1e-9) {
            let b = breakdowns.pop_front().expect("front checked");
            let k = lane_of[b.movement].expect("validated as a vehicle movement");
            match lanes[k].break_down(b.at_s + b.duration_s) {
                Some(id) => push_log(tick, format!("veh:{id}"), "breakdown", format!("until={:.1}", b.at_s + b.duration_s)),
                None => push_log(tick, format!("lane:{}", events.label(b.movement)), "breakdown", "no vehicle".into()),
            }
        }

        for (k, lane) in lanes.iter_mut().enumerate() {
            for arrival in vehicle_streams[k].drain(t) {
                let id = next_vehicle_id;
                next_vehicle_id += 1;
                lane.arrive(id, arrival);
                push_log(tick, format!("veh:{id}"), "arrive", events.label(lane.movement));
            }
            lane.spawn();
            let mut msgs = Vec::new();
            let ok = permitted(lane.movement);
            for c in lane.step(t, dt, ok, &mut msgs) {
                if !ok {
                    return Err(invariant(t, format!("vehicle {} crossed on red", c.vehicle)));
                }
                let delay = (c.time_s - c.arrival_s - free_flow_s).max(0.0);
                waits[lane.movement].push(delay);
                vehicles.push(VehicleRecord {
                    id: c.vehicle,
                    movement: lane.movement,
                    arrival_s: c.arrival_s,
                    span_entry_s: c.span_entry_s,
                    crossed_s: c.time_s,
                    delay_s: delay,
                });
                push_log(tick, format!("veh:{}", c.vehicle), "cross", format!("t={:.2}", c.time_s));
            }
            node_buffers[k].extend(msgs);
            lane.check_spacing().map_err(|m| invariant(t, m))?;
        }

        for cw in crosswalks.iter_mut() {
            for s in 0..2 {
                for a in cw.streams[s].drain(t) {
                    if cw.areas[s].arrive(1) == 0 {
                        cw.queues[s].push_back(a);
                    } else {
                        turned_away += 1;
                    }
                }
            }
            if permitted(cw.event) {
                let mut released = 0;
                for s in 0..2 {
                    released += cw.areas[s].release();
                    for a in cw.queues[s].drain(..) {
                        waits[cw.event].push(t - a);
                    }
                }
                if released > 0 {
                    push_log(
                        tick,
                        format!("ped:{}", events.label(cw.event)),
                        "release",
                        format!("count={released} clear_at={:.1}", t + crossing_time_s),
                    );
                }
            }
        }

        for (k, lane) in lanes.iter().enumerate() {
            let alarm = detect_jam(&lane.sensors, t + dt, config.jam_threshold_s, lane.green_since_s)?;
            match alarm {
                Some(a) if !jam_active[k] => {
                    jam_active[k] = true;
                    push_log(tick, format!("lane:{}", events.label(lane.movement)), "jam", format!("at={} m", a.position_m));
                    jams.push((t + dt, a));
                }
                None => jam_active[k] = false,
                _ => {}
            }
            let q = queue_length(&lane.sensors, t + dt, config.aggregation.stopped_speed_mps, config.aggregation.footprint_m);
            max_queue[lane.movement] = max_queue[lane.movement].max(q);
        }

        for (at, node) in schedule.transmissions_in(t, t + dt) {
            let dropped = config.radio_drop_probability > 0.0 && radio.random_bool(config.radio_drop_probability);
            if node < lanes.len() {
                let cut = node_buffers[node].partition_point(|m| m.time_s <= at);
                let messages: Vec<SensorMessage> = node_buffers[node].drain(..cut).collect();
                if dropped {
                    push_log(tick, format!("node:{}", events.label(lanes[node].movement)), "drop", format!("messages={}", messages.len()));
                    continue;
                }
                ap.ingest(&NodeReport { lane: lanes[node].movement, sent_at_s: at, messages })?;
            } else {
                let cw = &crosswalks[node - lanes.len()];
                if dropped {
                    push_log(tick, format!("node:{}", events.label(cw.event)), "drop", String::new());
                    continue;
                }
                ap.record_pedestrians(cw.areas[0].crossing, at, cw.areas[0].waiting() + cw.areas[1].waiting());
            }
        }
        let before = ap.congestion_events().len();
        ap.advance(t + dt)?;
        for ev in &ap.congestion_events()[before..] {
            push_log(tick, format!("lane:{}", events.label(ev.lane)), "congestion", format!("queue={} m", ev.queue_length_m));
        }

        for lane in &lanes {
            if lane.arrivals != lane.departures + lane.in_system() {
                return Err(invariant(
                    t,
                    format!("lane {} lost vehicles: {} in, {} out", events.label(lane.movement), lane.arrivals, lane.departures),
                ));
            }
        }
    }

    let end = ticks as f64 * dt;
    for i in 0..n {
        if let Some(since) = red_since[i] {
            max_red[i] = max_red[i].max(end - since);
        }
    }
    let decisions = controller.decisions().to_vec();
    for d in &decisions {
        let tick = (d.clock_s / dt).round() as u64;
        push_log(
            tick,
            "controller".into(),
            "decision",
            format!("{} {} {:.1}", d.trigger.as_str(), events.join_labels(&d.green_set), d.duration_s),
        );
    }
    log.sort_by_key(|r| r.tick);

    let span = topo.sensor_span_m;
    let speeds: Vec<f64> = vehicles
        .iter()
        .filter_map(|v| v.span_entry_s.map(|s| span / (v.crossed_s - s)))
        .collect();
    let avg_speed = if speeds.is_empty() {
        config.vehicle.desired_speed_mps
    } else {
        speeds.iter().sum::<f64>() / speeds.len() as f64
    };
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let vehicle_waits: Vec<f64> = vehicles.iter().map(|v| v.delay_s).collect();
    let ped_waits: Vec<f64> = crosswalks.iter().flat_map(|c| waits[c.event].iter().copied()).collect();
    let metrics = SimMetrics {
        seed: config.seed,
        duration_s: config.duration_s,
        avg_intersection_speed_mps: avg_speed,
        mean_wait_s: waits.iter().map(|w| mean(w)).collect(),
        max_wait_s: waits.iter().map(|w| w.iter().copied().fold(0.0, f64::max)).collect(),
        max_red_s: max_red,
        max_queue_m: max_queue,
        throughput: vehicles.len() as u64,
        arrivals: lanes.iter().map(|l| l.arrivals).sum(),
        mean_vehicle_wait_s: mean(&vehicle_waits),
        pedestrian_mean_wait_s: mean(&ped_waits),
        pedestrians_served: ped_waits.len() as u64,
        pedestrians_turned_away: turned_away,
        decisions: decisions.len(),
        rejected_messages: ap.rejected_messages(),
    };

    Ok(SimOutput {
        events,
        metrics,
        log,
        decisions,
        signal_changes,
        aggregates: ap.history().to_vec(),
        pedestrian_aggregates: ap.pedestrian_history().to_vec(),
        congestion_events: ap.congestion_events().to_vec(),
        jams,
        vehicles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub green_s: f64,
    pub avg_intersection_speed_mps: f64,
    pub throughput: u64,
}

/// One fixed-time run per green length, run concurrently.
pub fn cycle_sweep(config: &SimConfig, green_lengths: &[f64]) -> Result<Vec<SweepRow>, SimError> {
    let lead = config.countdown_lead_s();
    let phases = match &config.control {
        ControlSpec::FixedTime { phases, .. } => phases.clone(),
        ControlSpec::Adaptive { .. } => None,
    };
    let results: Vec<Result<SweepRow, SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> = green_lengths
            .iter()
            .map(|&g| {
                let mut cfg = config.clone();
                cfg.control = ControlSpec::FixedTime { green_s: g, countdown_lead_s: lead, phases: phases.clone() };
                s.spawn(move || {
                    let out = run(&cfg)?;
                    Ok(SweepRow {
                        green_s: g,
                        avg_intersection_speed_mps: out.metrics.avg_intersection_speed_mps,
                        throughput: out.metrics.throughput,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests;
