use std::collections::BTreeSet;

use super::{
    fitness, on_lights_changed, preempt_emergency, select_phase, ControlError, ControllerConfig, ControllerState,
    FitnessInputs, FitnessWeights, Mode, PhaseDecision,
};
use crate::aggregation::{AggregateEndpoint, QueryParams, QueryResponse};
use crate::sensing::EmergencyBeacon;
use crate::topology::{ConflictGraph, EventKind, EventSet};

const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    Timer,
    Data,
    Emergency,
    Scramble,
}

impl Trigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            Trigger::Timer => "timer",
            Trigger::Data => "data",
            Trigger::Emergency => "emergency",
            Trigger::Scramble => "scramble",
        }
    }
}

/// A decision as it was announced, before its countdown ran out.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub clock_s: f64,
    pub green_set: BTreeSet<usize>,
    pub duration_s: f64,
    pub trigger: Trigger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalChange {
    pub at_s: f64,
    pub from: BTreeSet<usize>,
    pub to: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
struct Pending {
    decision: PhaseDecision,
    switch_at_s: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Observed {
    queue_m: f64,
    waiting: f64,
}

/// The crossroad's control unit.
///
/// It pulls aggregates from the access point on a reading timer, decides
/// when the running phase's timer is about to expire or when fresh data
/// shows nobody left on the current green, announces each decision a
/// countdown ahead, and switches the lights when the countdown ends.
#[derive(Debug, Clone)]
pub struct DecisionUnit {
    events: EventSet,
    graph: ConflictGraph,
    config: ControllerConfig,
    weights: FitnessWeights,
    state: ControllerState,
    observed: Vec<Observed>,
    query: QueryParams,
    reads: u64,
    phase_start_s: f64,
    phase_duration_s: f64,
    pending: Option<Pending>,
    decisions: Vec<DecisionRecord>,
    pulls: Vec<f64>,
    endpoint_down: bool,
}

impl DecisionUnit {
    pub fn new(
        events: EventSet,
        graph: ConflictGraph,
        config: ControllerConfig,
        weights: FitnessWeights,
    ) -> Result<Self, ControlError> {
        config.validate()?;
        if graph.len() != events.len() {
            return Err(ControlError::LengthMismatch { what: "event set", got: events.len(), expected: graph.len() });
        }
        let n = events.len();
        Ok(DecisionUnit {
            events,
            graph,
            config,
            weights,
            state: ControllerState::new(n),
            observed: vec![Observed::default(); n],
            query: QueryParams::all(1),
            reads: 0,
            phase_start_s: 0.0,
            phase_duration_s: 0.0,
            pending: None,
            decisions: Vec::new(),
            pulls: Vec::new(),
            endpoint_down: false,
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn current_green(&self) -> &BTreeSet<usize> {
        &self.state.current_green
    }

    /// Green events that will lose green when the pending countdown ends.
    pub fn frozen(&self) -> BTreeSet<usize> {
        match &self.pending {
            Some(p) => self.state.current_green.difference(&p.decision.green_set).copied().collect(),
            None => BTreeSet::new(),
        }
    }

    pub fn pending_switch(&self) -> Option<(f64, &BTreeSet<usize>)> {
        self.pending.as_ref().map(|p| (p.switch_at_s, &p.decision.green_set))
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn pull_times(&self) -> &[f64] {
        &self.pulls
    }

    /// Runs the control unit at time `now`. Returns the light change applied
    /// at this instant, if any.
    pub fn step(
        &mut self,
        now: f64,
        endpoint: &mut dyn AggregateEndpoint,
        beacons: &[EmergencyBeacon],
    ) -> Option<SignalChange> {
        self.state.advance_to(now);
        let mut change = None;
        if self.pending.as_ref().is_some_and(|p| now + EPS >= p.switch_at_s) {
            let p = self.pending.take().expect("pending checked above");
            change = Some(self.apply(now, &p.decision));
        }

        let mut fresh = false;
        let period = self.config.reading_period_s;
        if now + EPS >= self.reads as f64 * period {
            while self.reads as f64 * period <= now + EPS {
                self.reads += 1;
            }
            self.pulls.push(now);
            match endpoint.query(&self.query) {
                Ok(resp) => {
                    fresh = !resp.is_empty();
                    self.absorb(&resp);
                    self.endpoint_down = false;
                }
                Err(e) => {
                    log::warn!("holding phase at {now:.1} s: {e}");
                    self.endpoint_down = true;
                }
            }
        }

        for b in beacons {
            self.emergency(now, b.approach);
        }

        if self.pending.is_none() && !self.endpoint_down {
            if let Err(e) = self.consider(now, fresh) {
                log::error!("no decision at {now:.1} s: {e}");
            }
        }
        change
    }

    fn apply(&mut self, now: f64, decision: &PhaseDecision) -> SignalChange {
        let from = self.state.current_green.clone();
        self.state = on_lights_changed(&self.state, decision, self.config.counter_scope);
        self.phase_start_s = now;
        self.phase_duration_s = decision.duration_s;
        SignalChange { at_s: now, from, to: decision.green_set.clone() }
    }

    fn absorb(&mut self, resp: &QueryResponse) {
        let n = self.events.len();
        for row in &resp.lanes {
            if row.lane < n && self.events.kind(row.lane).is_vehicle() {
                self.observed[row.lane] = Observed {
                    queue_m: row.queue_length_m,
                    waiting: row.vehicles_present as f64,
                };
            }
        }
        for row in &resp.pedestrians {
            if let Some(i) = self.events.position_of_kind(EventKind::Pedestrian { crossing: row.crossing }) {
                self.observed[i] = Observed { queue_m: 0.0, waiting: row.waiting as f64 };
            }
        }
        for (i, o) in self.observed.iter().enumerate() {
            self.state.requested[i] = o.waiting > 0.0;
        }
    }

    fn fitness_scores(&self) -> Vec<f64> {
        (0..self.events.len())
            .map(|i| {
                let o = self.observed[i];
                let red = if self.state.current_green.contains(&i) { 0.0 } else { self.state.red_wait_s[i] };
                let inputs = FitnessInputs {
                    queue_m: o.queue_m.max(0.0),
                    red_wait_s: red.max(0.0),
                    prev_green_s: self.state.prev_green_s[i].max(0.0),
                    waiting: o.waiting.max(0.0),
                };
                fitness(&inputs, &self.weights)
            })
            .collect()
    }

    fn emergency(&mut self, now: f64, approach: usize) {
        let decision = match preempt_emergency(&self.graph, &self.events, approach, &self.config) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("ignoring emergency beacon: {e}");
                return;
            }
        };
        if decision.green_set.is_empty() {
            log::warn!("approach {approach} has no movements to clear");
            return;
        }
        self.decisions.push(DecisionRecord {
            clock_s: now,
            green_set: decision.green_set.clone(),
            duration_s: decision.duration_s,
            trigger: Trigger::Emergency,
        });
        if decision.green_set == self.state.current_green {
            self.pending = None;
            self.phase_start_s = now;
            self.phase_duration_s = decision.duration_s;
            return;
        }
        self.pending = Some(Pending { switch_at_s: now + decision.countdown_lead_s, decision });
    }

    fn consider(&mut self, now: f64, fresh: bool) -> Result<(), ControlError> {
        let elapsed = now - self.phase_start_s;
        let lead = self.config.countdown_lead_s;
        let timer_due = elapsed + lead + EPS >= self.phase_duration_s;
        let gap_out = fresh
            && elapsed + lead + EPS >= self.config.min_green_s
            && !self.state.current_green.iter().any(|&i| self.state.requested[i]);
        if !timer_due && !gap_out {
            return Ok(());
        }
        let scores = self.fitness_scores();
        let decision = select_phase(&self.state, &self.graph, &self.events, &scores, &self.config)?;
        if decision.green_set == self.state.current_green {
            if timer_due {
                self.phase_duration_s = elapsed + decision.duration_s;
            }
            return Ok(());
        }
        let trigger = if self.config.mode == Mode::PedestrianScramble {
            Trigger::Scramble
        } else if timer_due {
            Trigger::Timer
        } else {
            Trigger::Data
        };
        self.decisions.push(DecisionRecord {
            clock_s: now,
            green_set: decision.green_set.clone(),
            duration_s: decision.duration_s,
            trigger,
        });
        self.pending = Some(Pending { switch_at_s: now + lead, decision });
        Ok(())
    }
}
