//! Scenario files: one TOML document with `[topology]`, `[demand]`,
//! `[controller]`, `[simulation]` and an optional `[output]` section.
//!
//! ```toml
//! [topology]
//! legs = 4                   # symmetric crossroad, OUT_i next to IN_i
//! exclude_u_turns = true
//! sensor_span_m = 200.0
//! sensor_spacing_m = 4.0
//! conflict_grid = "bundled"  # optional: "bundled" or a grid file path
//! symmetrize = true
//!
//! [demand]
//! vehicle_rate = 0.1         # veh/s for every movement
//! pedestrian_rate = 0.05     # ped/s for every crossing
//! vehicle = { IN1OUT3 = 0.3 }
//! pedestrian = { C2 = 0.0 }
//! emergency = [{ approach = 1, at_s = 300.0 }]
//! breakdown = [{ movement = "IN1OUT3", at_s = 100.0, duration_s = 60.0 }]
//!
//! [controller]
//! kind = "adaptive"          # or "fixed_time" with green_s and phases
//! max_red_wait_s = 90.0
//! min_green_s = 5.0
//! max_green_s = 30.0
//! countdown_lead_s = 3.0
//! raise_twice_rule = true
//! mode = "normal"            # vehicle_decongestion, pedestrian_scramble
//! counter_scope = "granted_only"
//! saturation_demand = 3.0
//! reading_period_s = 5.0
//!
//! [controller.fitness]
//! weights = [1.0, 1.0, 0.5, 1.0]
//! caps = [200.0, 90.0, 30.0, 20.0]
//!
//! [simulation]
//! seed = 42                  # required
//! duration_s = 3600.0
//! tick_s = 0.1
//!
//! [output]
//! dir = "out"
//! epoch = "00:00:00.00"
//! emit = ["queue_timeseries"]
//! ```
//!
//! Every key is optional except `simulation.seed`; unknown keys are errors.
//! The full key list is in `docs/scenario.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::aggregation::{parse_time_pattern, AggregationConfig};
use crate::control::{ControllerConfig, CounterScope, FitnessWeights, Mode};
use crate::fixtures::CONFLICT_GRID_PRINTED;
use crate::plot::PlotKind;
use crate::sensing::EmergencyBeacon;
use crate::simulator::{Breakdown, ControlSpec, DemandProfile, PedestrianParams, SimConfig, SimError, VehicleParams};
use crate::topology::{load_conflict_matrix, parse_conflict_grid, CrossroadTopology, EventKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    /// One-based; 0 when the file could not be read at all.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    topology: Option<Spanned<TopologySection>>,
    demand: Option<Spanned<DemandSection>>,
    controller: Option<Spanned<ControllerSection>>,
    simulation: Spanned<SimulationSection>,
    output: Option<Spanned<OutputSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    legs: Option<Spanned<usize>>,
    exclude_u_turns: Option<bool>,
    lanes_per_approach: Option<usize>,
    sensor_span_m: Option<f64>,
    sensor_spacing_m: Option<f64>,
    conflict_grid: Option<Spanned<String>>,
    symmetrize: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandSection {
    vehicle_rate: Option<f64>,
    pedestrian_rate: Option<f64>,
    #[serde(default)]
    vehicle: BTreeMap<String, Spanned<f64>>,
    #[serde(default)]
    pedestrian: BTreeMap<String, Spanned<f64>>,
    #[serde(default)]
    emergency: Vec<Spanned<EmergencyEntry>>,
    #[serde(default)]
    breakdown: Vec<Spanned<BreakdownEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmergencyEntry {
    approach: usize,
    at_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BreakdownEntry {
    movement: String,
    at_s: f64,
    duration_s: f64,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum ControllerKind {
    Adaptive,
    FixedTime,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum ModeName {
    Normal,
    VehicleDecongestion,
    PedestrianScramble,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum ScopeName {
    GrantedOnly,
    AllEvents,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    kind: Option<ControllerKind>,
    max_red_wait_s: Option<f64>,
    min_green_s: Option<f64>,
    max_green_s: Option<f64>,
    countdown_lead_s: Option<f64>,
    raise_twice_rule: Option<bool>,
    mode: Option<ModeName>,
    counter_scope: Option<ScopeName>,
    saturation_demand: Option<f64>,
    reading_period_s: Option<f64>,
    green_s: Option<Spanned<f64>>,
    phases: Option<Vec<Spanned<Vec<String>>>>,
    fitness: Option<Spanned<FitnessSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitnessSection {
    weights: Option<[f64; 4]>,
    caps: Option<[f64; 4]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    seed: u64,
    duration_s: Option<f64>,
    tick_s: Option<f64>,
    radio_drop_probability: Option<f64>,
    reporting_period_s: Option<f64>,
    jam_threshold_s: Option<f64>,
    congestion_threshold_m: Option<f64>,
    congestion_alerts: Option<bool>,
    window_s: Option<f64>,
    stopped_speed_mps: Option<f64>,
    detection_footprint_m: Option<f64>,
    vehicle: Option<VehicleSection>,
    pedestrian: Option<PedestrianSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleSection {
    desired_speed_mps: Option<f64>,
    length_m: Option<f64>,
    min_gap_m: Option<f64>,
    startup_lost_s: Option<f64>,
    saturation_headway_s: Option<f64>,
    spawn_offset_m: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PedestrianSection {
    crossing_width_m: Option<f64>,
    walking_speed_mps: Option<f64>,
    area_capacity: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<String>,
    metrics: Option<String>,
    decisions: Option<String>,
    aggregates: Option<String>,
    log: Option<String>,
    epoch: Option<Spanned<String>>,
    #[serde(default)]
    emit: Vec<Spanned<String>>,
}

/// Where a run writes its files.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub metrics: String,
    pub decisions: String,
    pub aggregates: String,
    /// Per-tick event log; not written unless named.
    pub log: Option<String>,
    /// Seconds of the day rendered for simulated time zero.
    pub epoch_s: f64,
    pub emit: Vec<PlotKind>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            metrics: "metrics.csv".into(),
            decisions: "decisions.csv".into(),
            aggregates: "aggregates.csv".into(),
            log: None,
            epoch_s: 0.0,
            emit: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub output: OutputSpec,
}

struct Lines<'a> {
    text: &'a str,
}

impl Lines<'_> {
    fn at(&self, offset: usize) -> usize {
        let end = offset.min(self.text.len());
        self.text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn err(&self, span: Range<usize>, message: impl Into<String>) -> ScenarioError {
        ScenarioError { line: self.at(span.start), message: message.into() }
    }

    /// Line of `key = ...` in the section starting at `span`, or the
    /// section's own line.
    fn key(&self, span: Range<usize>, key: &str) -> usize {
        let start = span.start.min(self.text.len());
        let mut offset = start;
        for (k, l) in self.text[start..].split_inclusive('\n').enumerate() {
            let t = l.trim_start();
            if k > 0 && t.starts_with('[') {
                break;
            }
            if t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('=')) {
                return self.at(offset);
            }
            offset += l.len();
        }
        self.at(start)
    }
}

/// Parses scenario text; relative grid paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let lines = Lines { text };
    let file: File = toml::from_str(text).map_err(|e| ScenarioError {
        line: e.span().map_or(1, |s| lines.at(s.start)),
        message: e.message().trim().to_string(),
    })?;

    let mut topology = CrossroadTopology::four_leg();
    let mut exclude_u_turns = true;
    let mut grid = None;
    if let Some(t) = &file.topology {
        let span = t.span();
        let t = t.get_ref();
        if let Some(legs) = &t.legs {
            if !(2..=12).contains(legs.get_ref()) {
                return Err(lines.err(legs.span(), "legs must be between 2 and 12"));
            }
            topology = CrossroadTopology::symmetric(*legs.get_ref());
        }
        exclude_u_turns = t.exclude_u_turns.unwrap_or(true);
        if let Some(l) = t.lanes_per_approach {
            topology.lanes_per_approach = l;
        }
        if let Some(v) = t.sensor_span_m {
            topology.sensor_span_m = v;
        }
        if let Some(v) = t.sensor_spacing_m {
            topology.sensor_spacing_m = v;
        }
        topology.validate().map_err(|e| lines.err(span.clone(), e.to_string()))?;
        if let Some(g) = &t.conflict_grid {
            let text = match g.get_ref().as_str() {
                "bundled" => CONFLICT_GRID_PRINTED.to_string(),
                p => {
                    let path = base_dir.map_or_else(|| PathBuf::from(p), |b| b.join(p));
                    fs::read_to_string(&path)
                        .map_err(|e| lines.err(g.span(), format!("cannot read {}: {e}", path.display())))?
                }
            };
            let rows = parse_conflict_grid(&text).map_err(|e| lines.err(g.span(), format!("conflict grid {e}")))?;
            let (graph, _) = load_conflict_matrix(&rows, t.symmetrize.unwrap_or(true))
                .map_err(|e| lines.err(g.span(), format!("conflict grid: {e}")))?;
            grid = Some(graph);
        }
    }

    let sim = file.simulation.get_ref();
    let sim_span = file.simulation.span();
    let mut config = SimConfig::new(topology.clone(), sim.seed);
    config.exclude_u_turns = exclude_u_turns;
    config.conflict_graph = grid;
    let events = config.events();
    let label_pos = |label: &str| events.position_of(label).ok();

    config.demand = DemandProfile::uniform(&events, topology.crossings, 0.0, 0.0);
    if let Some(d) = &file.demand {
        let d = d.get_ref();
        config.demand =
            DemandProfile::uniform(&events, topology.crossings, d.vehicle_rate.unwrap_or(0.0), d.pedestrian_rate.unwrap_or(0.0));
        for (label, rate) in &d.vehicle {
            match label_pos(label).map(|i| events.kind(i)) {
                Some(EventKind::Vehicle { .. }) => {
                    config.demand.vehicle_rates[label_pos(label).unwrap_or_default()] = *rate.get_ref()
                }
                _ => return Err(lines.err(rate.span(), format!("unknown vehicle movement `{label}`"))),
            }
        }
        for (label, rate) in &d.pedestrian {
            match label_pos(label).map(|i| events.kind(i)) {
                Some(EventKind::Pedestrian { crossing }) => config.demand.pedestrian_rates[crossing - 1] = *rate.get_ref(),
                _ => return Err(lines.err(rate.span(), format!("unknown pedestrian crossing `{label}`"))),
            }
        }
        for e in &d.emergency {
            let entry = e.get_ref();
            if entry.approach == 0 || entry.approach > topology.entering {
                return Err(lines.err(e.span(), format!("approach {} does not exist", entry.approach)));
            }
            config.demand.emergencies.push(EmergencyBeacon { approach: entry.approach, timestamp_s: entry.at_s });
        }
        for b in &d.breakdown {
            let entry = b.get_ref();
            let movement = label_pos(&entry.movement)
                .filter(|&i| events.kind(i).is_vehicle())
                .ok_or_else(|| lines.err(b.span(), format!("unknown vehicle movement `{}`", entry.movement)))?;
            config.breakdowns.push(Breakdown { movement, at_s: entry.at_s, duration_s: entry.duration_s });
        }
    }

    if let Some(c) = &file.controller {
        let span = c.span();
        let c = c.get_ref();
        let mut cc = ControllerConfig::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cc.max_red_wait_s, c.max_red_wait_s);
        set(&mut cc.min_green_s, c.min_green_s);
        set(&mut cc.max_green_s, c.max_green_s);
        set(&mut cc.countdown_lead_s, c.countdown_lead_s);
        set(&mut cc.saturation_demand, c.saturation_demand);
        set(&mut cc.reading_period_s, c.reading_period_s);
        if let Some(r) = c.raise_twice_rule {
            cc.raise_twice_rule = r;
        }
        if let Some(m) = c.mode {
            cc.mode = match m {
                ModeName::Normal => Mode::Normal,
                ModeName::VehicleDecongestion => Mode::VehicleDecongestion,
                ModeName::PedestrianScramble => Mode::PedestrianScramble,
            };
        }
        if let Some(s) = c.counter_scope {
            cc.counter_scope = match s {
                ScopeName::GrantedOnly => CounterScope::GrantedOnly,
                ScopeName::AllEvents => CounterScope::AllEvents,
            };
        }
        match c.kind.unwrap_or(ControllerKind::Adaptive) {
            ControllerKind::Adaptive => {
                if let Some(g) = &c.green_s {
                    return Err(lines.err(g.span(), "green_s applies to fixed_time controllers only"));
                }
                cc.validate().map_err(|e| lines.err(span.clone(), e.to_string()))?;
                let mut weights = FitnessWeights::default();
                if let Some(f) = &c.fitness {
                    let fs = f.get_ref();
                    weights = FitnessWeights::new(fs.weights.unwrap_or(weights.weights()), fs.caps.unwrap_or(weights.caps()))
                        .map_err(|e| lines.err(f.span(), e.to_string()))?;
                }
                config.control = ControlSpec::Adaptive { config: cc, weights };
            }
            ControllerKind::FixedTime => {
                let green_s = c
                    .green_s
                    .as_ref()
                    .ok_or_else(|| ScenarioError { line: lines.key(span.clone(), "kind"), message: "fixed_time needs green_s".into() })?;
                if !(*green_s.get_ref() > 0.0) || !green_s.get_ref().is_finite() {
                    return Err(lines.err(green_s.span(), "green_s must be positive"));
                }
                let phases = match &c.phases {
                    None => None,
                    Some(list) => {
                        let mut out = Vec::new();
                        for p in list {
                            let mut set = BTreeSet::new();
                            for label in p.get_ref() {
                                let i = label_pos(label)
                                    .ok_or_else(|| lines.err(p.span(), format!("unknown event `{label}`")))?;
                                set.insert(i);
                            }
                            out.push(set);
                        }
                        Some(out)
                    }
                };
                config.control =
                    ControlSpec::FixedTime { green_s: *green_s.get_ref(), countdown_lead_s: cc.countdown_lead_s, phases };
            }
        }
    }

    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut config.duration_s, sim.duration_s);
    set(&mut config.tick_s, sim.tick_s);
    set(&mut config.radio_drop_probability, sim.radio_drop_probability);
    set(&mut config.reporting_period_s, sim.reporting_period_s);
    set(&mut config.jam_threshold_s, sim.jam_threshold_s);
    if let Some(v) = sim.congestion_threshold_m {
        config.congestion_threshold_m = Some(v);
    }
    if sim.congestion_alerts == Some(false) {
        config.congestion_threshold_m = None;
    }
    let mut agg = AggregationConfig::default();
    set(&mut agg.window_len_s, sim.window_s);
    set(&mut agg.stopped_speed_mps, sim.stopped_speed_mps);
    set(&mut agg.footprint_m, sim.detection_footprint_m);
    config.aggregation = agg;
    if let Some(v) = &sim.vehicle {
        let mut p = VehicleParams::default();
        set(&mut p.desired_speed_mps, v.desired_speed_mps);
        set(&mut p.length_m, v.length_m);
        set(&mut p.min_gap_m, v.min_gap_m);
        set(&mut p.startup_lost_s, v.startup_lost_s);
        set(&mut p.saturation_headway_s, v.saturation_headway_s);
        set(&mut p.spawn_offset_m, v.spawn_offset_m);
        config.vehicle = p;
    }
    if let Some(v) = &sim.pedestrian {
        let mut p = PedestrianParams::default();
        set(&mut p.crossing_width_m, v.crossing_width_m);
        set(&mut p.walking_speed_mps, v.walking_speed_mps);
        if let Some(c) = v.area_capacity {
            p.area_capacity = c;
        }
        config.pedestrian = p;
    }

    let sim_line = lines.at(sim_span.start);
    let topology_line = file.topology.as_ref().map_or(sim_line, |s| lines.at(s.span().start));
    let demand_line = file.demand.as_ref().map_or(sim_line, |s| lines.at(s.span().start));
    let controller_line = file.controller.as_ref().map_or(sim_line, |s| lines.at(s.span().start));
    config.validate().map_err(|e| {
        let line = match &e {
            SimError::Topology(_) | SimError::Graph(_) => topology_line,
            SimError::Control(_) => controller_line,
            SimError::InvalidConfig(m) if m.contains("rate") || m.contains("emergenc") => demand_line,
            SimError::InvalidConfig(m) if m.contains("phase") => controller_line,
            _ => sim_line,
        };
        ScenarioError { line, message: e.to_string() }
    })?;

    let mut output = OutputSpec::default();
    if let Some(o) = &file.output {
        let o = o.get_ref();
        if let Some(d) = &o.dir {
            output.dir = PathBuf::from(d);
        }
        for (slot, v) in [
            (&mut output.metrics, &o.metrics),
            (&mut output.decisions, &o.decisions),
            (&mut output.aggregates, &o.aggregates),
        ] {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        output.log = o.log.clone();
        if let Some(e) = &o.epoch {
            output.epoch_s = parse_time_pattern(e.get_ref()).map_err(|err| lines.err(e.span(), err.to_string()))?;
        }
        for k in &o.emit {
            let kind = k.get_ref().parse::<PlotKind>().map_err(|err| lines.err(k.span(), err.to_string()))?;
            output.emit.push(kind);
        }
    }
    Ok(Scenario { config, output })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ScenarioError { line: 0, message: format!("cannot read {}: {e}", path.display()) })?;
    parse_scenario(&text, path.parent())
}
