use std::collections::BTreeSet;

use super::{CounterScope, PhaseDecision};

/// Per-event bookkeeping of the controller. All vectors are indexed by
/// event position.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Change counters `T_i`.
    pub counters: Vec<u64>,
    pub red_wait_s: Vec<f64>,
    pub prev_green_s: Vec<f64>,
    pub requested: Vec<bool>,
    /// Light changes since the event last got green.
    pub raised_since: Vec<u64>,
    pub current_green: BTreeSet<usize>,
    /// Start of the running green for events in `current_green`.
    pub green_since_s: Vec<Option<f64>>,
    pub clock_s: f64,
}

impl ControllerState {
    pub fn new(n: usize) -> Self {
        ControllerState {
            counters: vec![0; n],
            red_wait_s: vec![0.0; n],
            prev_green_s: vec![0.0; n],
            requested: vec![false; n],
            raised_since: vec![0; n],
            current_green: BTreeSet::new(),
            green_since_s: vec![None; n],
            clock_s: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.counters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counters.is_empty()
    }

    /// Moves the clock to `now`, accumulating red wait for every event that
    /// is not green.
    pub fn advance_to(&mut self, now: f64) {
        let dt = now - self.clock_s;
        if dt <= 0.0 {
            return;
        }
        for (i, w) in self.red_wait_s.iter_mut().enumerate() {
            if !self.current_green.contains(&i) {
                *w += dt;
            }
        }
        self.clock_s = now;
    }

    pub fn green_elapsed_s(&self, event: usize) -> Option<f64> {
        self.green_since_s[event].map(|s| self.clock_s - s)
    }
}

/// Applies a light change at the state's clock.
pub fn on_lights_changed(state: &ControllerState, decision: &PhaseDecision, scope: CounterScope) -> ControllerState {
    let mut next = state.clone();
    let now = state.clock_s;
    for i in 0..state.len() {
        let granted = decision.green_set.contains(&i);
        if granted || scope == CounterScope::AllEvents {
            next.counters[i] += 1;
        }
        if granted {
            next.raised_since[i] = 0;
            next.red_wait_s[i] = 0.0;
            if next.green_since_s[i].is_none() {
                next.green_since_s[i] = Some(now);
            }
        } else {
            next.raised_since[i] += 1;
            if let Some(since) = next.green_since_s[i].take() {
                next.prev_green_s[i] = now - since;
                next.red_wait_s[i] = 0.0;
            }
        }
    }
    next.current_green = decision.green_set.clone();
    next
}
