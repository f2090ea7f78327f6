//! Crossroad layout, the event set and the conflict graph between events.
//!
//! Streets are numbered from 1, clockwise starting at the northern leg.
//! Event positions inside an [`EventSet`] are 0-based; the 1-based
//! `Event::index` only shows up in labels such as `E4`.

mod geometry;
mod graph;
mod grid;

use std::fmt;

use thiserror::Error;

pub use geometry::build_conflict_graph;
pub use graph::{
    enumerate_maximal_compatible_sets, load_conflict_matrix, ConflictGraph, GraphError, RepairReport,
    MAX_ENUMERATION_EVENTS,
};
pub use grid::{parse_conflict_grid, write_conflict_grid, GridError};

/// 1-based street number.
pub type StreetId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("sensor spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("sensor span must be non-negative and finite, got {0}")]
    InvalidSpan(f64),
    #[error("lanes per approach must be at least 1")]
    NoLanes,
    #[error("pairing has {got} entries, expected one per entering street ({expected})")]
    PairingLength { got: usize, expected: usize },
    #[error("entering street {street} is paired with OUT{out}, which does not exist")]
    PairingOutOfRange { street: StreetId, out: StreetId },
    #[error("OUT{out} is paired with more than one entering street")]
    PairingNotInjective { out: StreetId },
    #[error("crossing geometry has {got} entries, expected {expected}")]
    CrossingLength { got: usize, expected: usize },
    #[error("crossing C{crossing} spans street {street}, which does not exist")]
    CrossingOutOfRange { crossing: usize, street: StreetId },
    #[error("events are not in canonical order at position {0}")]
    NotCanonical(usize),
    #[error("unknown event label `{0}`")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossroadTopology {
    pub entering: usize,
    pub leaving: usize,
    pub crossings: usize,
    /// `pairing[i - 1]` is the leaving street next to entering street `i`.
    pub pairing: Vec<Option<StreetId>>,
    pub lanes_per_approach: usize,
    pub sensor_span_m: f64,
    pub sensor_spacing_m: f64,
    /// `crossing_streets[k - 1]` is the street spanned by crossing `C_k`.
    pub crossing_streets: Vec<StreetId>,
}

impl CrossroadTopology {
    /// Symmetric crossroad with `legs` two-way streets, each `OUT_i` next to
    /// `IN_i` and one pedestrian crossing per street.
    pub fn symmetric(legs: usize) -> Self {
        CrossroadTopology {
            entering: legs,
            leaving: legs,
            crossings: legs,
            pairing: (1..=legs).map(Some).collect(),
            lanes_per_approach: 1,
            sensor_span_m: 200.0,
            sensor_spacing_m: 4.0,
            crossing_streets: (1..=legs).collect(),
        }
    }

    /// The common four-leg crossroad.
    pub fn four_leg() -> Self {
        Self::symmetric(4)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if !(self.sensor_spacing_m > 0.0) || !self.sensor_spacing_m.is_finite() {
            return Err(TopologyError::InvalidSpacing(self.sensor_spacing_m));
        }
        if !(self.sensor_span_m >= 0.0) || !self.sensor_span_m.is_finite() {
            return Err(TopologyError::InvalidSpan(self.sensor_span_m));
        }
        if self.lanes_per_approach == 0 {
            return Err(TopologyError::NoLanes);
        }
        if self.pairing.len() != self.entering {
            return Err(TopologyError::PairingLength {
                got: self.pairing.len(),
                expected: self.entering,
            });
        }
        let mut used = vec![false; self.leaving + 1];
        for (i, p) in self.pairing.iter().enumerate() {
            if let Some(out) = *p {
                if out == 0 || out > self.leaving {
                    return Err(TopologyError::PairingOutOfRange { street: i + 1, out });
                }
                if used[out] {
                    return Err(TopologyError::PairingNotInjective { out });
                }
                used[out] = true;
            }
        }
        if self.crossing_streets.len() != self.crossings {
            return Err(TopologyError::CrossingLength {
                got: self.crossing_streets.len(),
                expected: self.crossings,
            });
        }
        for (k, &s) in self.crossing_streets.iter().enumerate() {
            if s == 0 || s > self.entering.max(self.leaving) {
                return Err(TopologyError::CrossingOutOfRange { crossing: k + 1, street: s });
            }
        }
        Ok(())
    }

    pub fn paired_out(&self, street: StreetId) -> Option<StreetId> {
        self.pairing.get(street.checked_sub(1)?).copied().flatten()
    }

    /// Entering street whose paired leaving street is `out`.
    pub fn paired_in(&self, out: StreetId) -> Option<StreetId> {
        self.pairing.iter().position(|p| *p == Some(out)).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Vehicle { from: StreetId, to: StreetId },
    /// Pedestrians on crossing `C_crossing`.
    Pedestrian { crossing: usize },
}

impl EventKind {
    pub fn is_vehicle(&self) -> bool {
        matches!(self, EventKind::Vehicle { .. })
    }

    pub fn is_pedestrian(&self) -> bool {
        matches!(self, EventKind::Pedestrian { .. })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Vehicle { from, to } => write!(f, "IN{from}OUT{to}"),
            EventKind::Pedestrian { crossing } => write!(f, "C{crossing}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub kind: EventKind,
    /// 1-based position in the event set.
    pub index: usize,
}

impl Event {
    pub fn label(&self) -> String {
        self.kind.to_string()
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSet {
    events: Vec<Event>,
    entering: usize,
}

impl EventSet {
    /// Builds a set from kinds that are already in canonical order.
    pub fn from_kinds(kinds: Vec<EventKind>, entering: usize) -> Result<Self, TopologyError> {
        for (i, w) in kinds.windows(2).enumerate() {
            let ordered = match (w[0], w[1]) {
                (EventKind::Pedestrian { .. }, EventKind::Vehicle { .. }) => false,
                (a, b) => a < b,
            };
            if !ordered {
                return Err(TopologyError::NotCanonical(i + 1));
            }
        }
        let events = kinds
            .into_iter()
            .enumerate()
            .map(|(i, kind)| Event { kind, index: i + 1 })
            .collect();
        Ok(EventSet { events, entering })
    }

    /// `vehicles` movements from `IN1` to distinct out streets plus
    /// `pedestrians` crossings. Useful for abstract graphs.
    pub fn synthetic(vehicles: usize, pedestrians: usize) -> Self {
        let mut kinds: Vec<EventKind> =
            (1..=vehicles).map(|to| EventKind::Vehicle { from: 1, to }).collect();
        kinds.extend((1..=pedestrians).map(|crossing| EventKind::Pedestrian { crossing }));
        Self::from_kinds(kinds, 1).expect("synthetic kinds are canonical")
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn entering_streets(&self) -> usize {
        self.entering
    }

    pub fn get(&self, pos: usize) -> Option<&Event> {
        self.events.get(pos)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn kind(&self, pos: usize) -> EventKind {
        self.events[pos].kind
    }

    pub fn labels(&self) -> Vec<String> {
        self.events.iter().map(Event::label).collect()
    }

    pub fn label(&self, pos: usize) -> String {
        self.events[pos].label()
    }

    pub fn position_of(&self, label: &str) -> Result<usize, TopologyError> {
        self.events
            .iter()
            .position(|e| e.label() == label)
            .ok_or_else(|| TopologyError::UnknownLabel(label.to_string()))
    }

    pub fn position_of_kind(&self, kind: EventKind) -> Option<usize> {
        self.events.iter().position(|e| e.kind == kind)
    }

    pub fn vehicle_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kind(i).is_vehicle()).collect()
    }

    pub fn pedestrian_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kind(i).is_pedestrian()).collect()
    }

    /// Vehicle movements leaving from `street`.
    pub fn approach_positions(&self, street: StreetId) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| matches!(self.kind(i), EventKind::Vehicle { from, .. } if from == street))
            .collect()
    }

    /// Labels of a set of positions joined with `;`.
    pub fn join_labels<'a>(&self, positions: impl IntoIterator<Item = &'a usize>) -> String {
        positions
            .into_iter()
            .map(|&p| self.label(p))
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub fn enumerate_events(topology: &CrossroadTopology, exclude_u_turns: bool) -> EventSet {
    let mut kinds = Vec::new();
    for from in 1..=topology.entering {
        let paired = topology.paired_out(from);
        for to in 1..=topology.leaving {
            if exclude_u_turns && paired == Some(to) {
                continue;
            }
            kinds.push(EventKind::Vehicle { from, to });
        }
    }
    kinds.extend((1..=topology.crossings).map(|crossing| EventKind::Pedestrian { crossing }));
    EventSet::from_kinds(kinds, topology.entering).expect("enumeration is canonical")
}
