use std::collections::BTreeSet;

use crate::control::{DecisionRecord, SignalChange, Trigger};
use crate::topology::ConflictGraph;

const EPS: f64 = 1e-6;

/// Greedy first-fit colouring of the demanded events into compatible phases,
/// in event order.
pub fn fixed_phase_plan(graph: &ConflictGraph, demanded: &[usize]) -> Vec<BTreeSet<usize>> {
    let mut phases: Vec<BTreeSet<usize>> = Vec::new();
    for &e in demanded {
        match phases.iter_mut().find(|p| graph.compatible_with(p.iter(), e)) {
            Some(p) => {
                p.insert(e);
            }
            None => phases.push(BTreeSet::from([e])),
        }
    }
    phases
}

/// Cycles through a fixed list of phases: `green_s` of green, a countdown
/// of `lead_s`, then the next phase.
#[derive(Debug, Clone)]
pub struct FixedTimeController {
    phases: Vec<BTreeSet<usize>>,
    green_s: f64,
    lead_s: f64,
    index: usize,
    phase_start_s: f64,
    started: bool,
    current: BTreeSet<usize>,
    announced: Option<usize>,
    decisions: Vec<DecisionRecord>,
}

impl FixedTimeController {
    pub fn new(phases: Vec<BTreeSet<usize>>, green_s: f64, lead_s: f64) -> Self {
        FixedTimeController {
            phases,
            green_s,
            lead_s,
            index: 0,
            phase_start_s: 0.0,
            started: false,
            current: BTreeSet::new(),
            announced: None,
            decisions: Vec::new(),
        }
    }

    pub fn current_green(&self) -> &BTreeSet<usize> {
        &self.current
    }

    pub fn frozen(&self) -> BTreeSet<usize> {
        match self.announced {
            Some(next) => self.current.difference(&self.phases[next]).copied().collect(),
            None => BTreeSet::new(),
        }
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn step(&mut self, now: f64) -> Option<SignalChange> {
        if self.phases.is_empty() {
            return None;
        }
        if !self.started {
            self.started = true;
            self.phase_start_s = now;
            self.decisions.push(DecisionRecord {
                clock_s: now,
                green_set: self.phases[0].clone(),
                duration_s: self.green_s,
                trigger: Trigger::Timer,
            });
            let from = std::mem::replace(&mut self.current, self.phases[0].clone());
            return Some(SignalChange { at_s: now, from, to: self.current.clone() });
        }
        if self.phases.len() == 1 {
            return None;
        }
        let elapsed = now - self.phase_start_s;
        if self.announced.is_none() && elapsed + EPS >= self.green_s {
            let next = (self.index + 1) % self.phases.len();
            self.announced = Some(next);
            self.decisions.push(DecisionRecord {
                clock_s: now,
                green_set: self.phases[next].clone(),
                duration_s: self.green_s,
                trigger: Trigger::Timer,
            });
        }
        if let Some(next) = self.announced {
            if elapsed + EPS >= self.green_s + self.lead_s {
                self.announced = None;
                self.index = next;
                self.phase_start_s = now;
                let from = std::mem::replace(&mut self.current, self.phases[next].clone());
                return Some(SignalChange { at_s: now, from, to: self.current.clone() });
            }
        }
        None
    }
}
