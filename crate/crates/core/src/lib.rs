//! Sensor-network driven traffic light control for a single crossroad.
//!
//! The crate is layered the same way the control system is:
//!
//! * [`sensing`] turns raw magnetometer and pedestrian-area readings into
//!   detections, speed estimates and jam alarms, and schedules radio reports.
//! * [`aggregation`] is the access point: per-lane, per-light-color windows,
//!   queue estimation, congestion events and filtered queries.
//! * [`control`] scores events, keeps the fairness counters and picks the
//!   next compatible green set.
//! * [`topology`] describes the crossroad, its event set and the conflict
//!   graph the controller must respect.
//! * [`simulator`] closes the loop with a deterministic fixed-tick
//!   microsimulation.
//!
//! [`scenario`], [`fixtures`] and [`plot`] back the command line runner.

pub mod aggregation;
pub mod control;
pub mod fixtures;
pub mod plot;
pub mod scenario;
pub mod sensing;
pub mod simulator;
pub mod topology;

pub use topology::{ConflictGraph, CrossroadTopology, Event, EventKind, EventSet};
