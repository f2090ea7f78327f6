//! Traffic light control: event fitness, change counters, green-set
//! selection and the decision loop that drives the lights.

mod decision_unit;
mod fitness;
mod select;
mod state;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::topology::GraphError;

pub use decision_unit::{DecisionRecord, DecisionUnit, SignalChange, Trigger};
pub use fitness::{fitness, FitnessInputs, FitnessWeights};
pub use select::{min_counter_events, preempt_emergency, select_phase};
pub use state::{on_lights_changed, ControllerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("street {0} is not an entering street")]
    UnknownStreet(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Normal,
    /// Only vehicle movements compete for green.
    VehicleDecongestion,
    /// Every pedestrian crossing at once.
    PedestrianScramble,
}

/// Which counters move on a light change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CounterScope {
    #[default]
    GrantedOnly,
    AllEvents,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub max_red_wait_s: f64,
    pub min_green_s: f64,
    pub max_green_s: f64,
    pub countdown_lead_s: f64,
    pub raise_twice_rule: bool,
    pub mode: Mode,
    pub counter_scope: CounterScope,
    /// Summed positive fitness at which a phase gets `max_green_s`.
    pub saturation_demand: f64,
    /// Period of the access point reading timer.
    pub reading_period_s: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            max_red_wait_s: 90.0,
            min_green_s: 5.0,
            max_green_s: 30.0,
            countdown_lead_s: 3.0,
            raise_twice_rule: true,
            mode: Mode::Normal,
            counter_scope: CounterScope::GrantedOnly,
            saturation_demand: 3.0,
            reading_period_s: 5.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::InvalidConfig(m.to_string()));
        let finite = [
            self.max_red_wait_s,
            self.min_green_s,
            self.max_green_s,
            self.countdown_lead_s,
            self.saturation_demand,
            self.reading_period_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("timings must be finite");
        }
        if !(self.min_green_s > 0.0) || self.min_green_s > self.max_green_s {
            return bad("need 0 < min_green_s <= max_green_s");
        }
        if self.countdown_lead_s < 2.0 {
            return bad("countdown_lead_s must be at least 2 s");
        }
        if !(self.max_red_wait_s > 0.0) {
            return bad("max_red_wait_s must be positive");
        }
        if !(self.saturation_demand > 0.0) {
            return bad("saturation_demand must be positive");
        }
        if !(self.reading_period_s > 0.0) {
            return bad("reading_period_s must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDecision {
    pub green_set: BTreeSet<usize>,
    pub duration_s: f64,
    pub countdown_lead_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let mut c = ControllerConfig::default();
        c.countdown_lead_s = 1.5;
        assert!(c.validate().is_err());
        let mut c = ControllerConfig::default();
        c.min_green_s = 40.0;
        assert!(c.validate().is_err());
        let mut c = ControllerConfig::default();
        c.min_green_s = 0.0;
        assert!(c.validate().is_err());
    }
}
