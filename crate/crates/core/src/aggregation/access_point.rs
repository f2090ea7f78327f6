use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    projection, select_rows, AggregationConfig, AggregationError, CongestionDetector, CongestionEvent,
    LaneAggregate, LaneTrace, LightColor, Metric, QueryParams, WindowTiler,
};
use crate::sensing::LaneSensorArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorEdge {
    Enter,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorMessage {
    pub sensor: usize,
    pub edge: SensorEdge,
    pub time_s: f64,
}

/// Everything one lane node heard since its previous slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub lane: usize,
    pub sent_at_s: f64,
    pub messages: Vec<SensorMessage>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianAggregate {
    pub crossing: usize,
    pub time_s: f64,
    pub waiting: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryResponse {
    pub lanes: Vec<LaneAggregate>,
    pub pedestrians: Vec<PedestrianAggregate>,
}

impl QueryResponse {
    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty() && self.pedestrians.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EndpointError {
    #[error("access point unavailable")]
    Unavailable,
}

/// Source of aggregates for the controller.
pub trait AggregateEndpoint {
    fn query(&mut self, params: &QueryParams) -> Result<QueryResponse, EndpointError>;
}

#[derive(Debug, Clone)]
struct LaneSlot {
    trace: LaneTrace,
    tiler: WindowTiler,
    watermark: f64,
}

/// The crossroad's access point. Lane nodes push reports, the light
/// controller announces colour changes, and finished windows are turned into
/// aggregates once every detection inside them has been reported.
#[derive(Debug, Clone)]
pub struct AccessPoint {
    cfg: AggregationConfig,
    lanes: BTreeMap<usize, LaneSlot>,
    history: Vec<LaneAggregate>,
    ped_history: Vec<PedestrianAggregate>,
    sent_lane: BTreeMap<(usize, Vec<Metric>), (f64, Vec<u64>)>,
    sent_ped: BTreeMap<usize, (f64, u32)>,
    congestion: Option<CongestionDetector>,
    congestion_events: Vec<CongestionEvent>,
    rejected: u64,
    available: bool,
}

impl AccessPoint {
    /// Every lane starts on red at `start_s`.
    pub fn new(
        cfg: AggregationConfig,
        layouts: &[LaneSensorArray],
        start_s: f64,
        congestion_threshold_m: Option<f64>,
    ) -> Result<Self, AggregationError> {
        cfg.validate()?;
        let congestion = congestion_threshold_m.map(CongestionDetector::new).transpose()?;
        let lanes = layouts
            .iter()
            .map(|l| {
                let slot = LaneSlot {
                    trace: LaneTrace::new(l, cfg),
                    tiler: WindowTiler::new(start_s, LightColor::Red, cfg.window_len_s),
                    watermark: start_s,
                };
                (l.lane, slot)
            })
            .collect();
        Ok(AccessPoint {
            cfg,
            lanes,
            history: Vec::new(),
            ped_history: Vec::new(),
            sent_lane: BTreeMap::new(),
            sent_ped: BTreeMap::new(),
            congestion,
            congestion_events: Vec::new(),
            rejected: 0,
            available: true,
        })
    }

    pub fn config(&self) -> &AggregationConfig {
        &self.cfg
    }

    pub fn ingest(&mut self, report: &NodeReport) -> Result<(), AggregationError> {
        let slot = self.lanes.get_mut(&report.lane).ok_or(AggregationError::UnknownLane(report.lane))?;
        for m in &report.messages {
            let r = match m.edge {
                SensorEdge::Enter => slot.trace.push_enter(m.sensor, m.time_s),
                SensorEdge::Exit => slot.trace.push_exit(m.sensor, m.time_s),
            };
            if let Err(e) = r {
                self.rejected += 1;
                log::debug!("dropping sensor message: {e}");
            }
        }
        slot.watermark = slot.watermark.max(report.sent_at_s);
        Ok(())
    }

    pub fn set_light(&mut self, lane: usize, t: f64, light: LightColor) -> Result<(), AggregationError> {
        let slot = self.lanes.get_mut(&lane).ok_or(AggregationError::UnknownLane(lane))?;
        slot.tiler.change(t, light);
        Ok(())
    }

    /// Closes windows up to `now` and aggregates those fully reported.
    pub fn advance(&mut self, now: f64) -> Result<(), AggregationError> {
        for slot in self.lanes.values_mut() {
            slot.tiler.roll(now);
            while let Some(w) = slot.tiler.pop_ready(slot.watermark) {
                let agg = slot.trace.aggregate(w.light, w.start_s, w.end_s, slot.watermark)?;
                if let Some(ev) = self.congestion.as_mut().and_then(|c| c.feed(&agg)) {
                    log::info!("lane {} queue {} m over {} m", ev.lane, ev.queue_length_m, ev.threshold_m);
                    self.congestion_events.push(ev);
                }
                self.history.push(agg);
            }
        }
        Ok(())
    }

    pub fn record_pedestrians(&mut self, crossing: usize, time_s: f64, waiting: u32) {
        self.ped_history.push(PedestrianAggregate { crossing, time_s, waiting });
    }

    pub fn set_available(&mut self, available: bool) {
        self.available = available;
    }

    pub fn history(&self) -> &[LaneAggregate] {
        &self.history
    }

    pub fn pedestrian_history(&self) -> &[PedestrianAggregate] {
        &self.ped_history
    }

    pub fn congestion_events(&self) -> &[CongestionEvent] {
        &self.congestion_events
    }

    pub fn rejected_messages(&self) -> u64 {
        self.rejected
    }

    pub fn lane_trace(&self, lane: usize) -> Option<&LaneTrace> {
        self.lanes.get(&lane).map(|s| &s.trace)
    }

    fn pedestrian_rows(&self, params: &QueryParams) -> Vec<PedestrianAggregate> {
        if !params.metrics.contains(&Metric::Pedestrians) {
            return Vec::new();
        }
        let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
        let mut rows: Vec<_> = self
            .ped_history
            .iter()
            .rev()
            .filter(|p| {
                let n = taken.entry(p.crossing).or_insert(0);
                *n += 1;
                *n <= params.windows
            })
            .copied()
            .collect();
        rows.reverse();
        rows
    }
}

impl AggregateEndpoint for AccessPoint {
    fn query(&mut self, params: &QueryParams) -> Result<QueryResponse, EndpointError> {
        if !self.available {
            return Err(EndpointError::Unavailable);
        }
        let metrics: Vec<Metric> = params.metrics.iter().copied().collect();
        let mut out = QueryResponse::default();
        for row in select_rows(&self.history, params) {
            let values = projection(&row, &params.metrics);
            let key = (row.lane, metrics.clone());
            let fresh = match self.sent_lane.get(&key) {
                Some((last_start, last)) => row.window_start_s > *last_start && *last != values,
                None => true,
            };
            let last_start = self.sent_lane.get(&key).map_or(row.window_start_s, |s| s.0.max(row.window_start_s));
            self.sent_lane.insert(key, (last_start, values));
            if fresh {
                out.lanes.push(row);
            }
        }
        for row in self.pedestrian_rows(params) {
            let fresh = match self.sent_ped.get(&row.crossing) {
                Some(&(t, w)) => row.time_s > t && w != row.waiting,
                None => true,
            };
            let t = self.sent_ped.get(&row.crossing).map_or(row.time_s, |s| s.0.max(row.time_s));
            self.sent_ped.insert(row.crossing, (t, row.waiting));
            if fresh {
                out.pedestrians.push(row);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::layout_sensors;
    use std::collections::BTreeSet;

    fn ap() -> AccessPoint {
        let layout = layout_sensors(8.0, 4.0).unwrap().with_lane(3);
        AccessPoint::new(AggregationConfig::default(), &[layout], 0.0, Some(4.0)).unwrap()
    }

    fn msg(sensor: usize, edge: SensorEdge, time_s: f64) -> SensorMessage {
        SensorMessage { sensor, edge, time_s }
    }

    #[test]
    fn windows_wait_for_reports() {
        let mut ap = ap();
        ap.advance(12.0).unwrap();
        assert!(ap.history().is_empty());
        ap.ingest(&NodeReport { lane: 3, sent_at_s: 11.0, messages: vec![] }).unwrap();
        ap.advance(12.0).unwrap();
        assert_eq!(ap.history().len(), 2);
        assert!(ap.ingest(&NodeReport { lane: 9, sent_at_s: 11.0, messages: vec![] }).is_err());
    }

    #[test]
    fn repeated_query_is_suppressed() {
        let mut ap = ap();
        ap.ingest(&NodeReport {
            lane: 3,
            sent_at_s: 30.0,
            messages: vec![msg(2, SensorEdge::Enter, 1.0), msg(1, SensorEdge::Enter, 2.0), msg(0, SensorEdge::Enter, 3.0)],
        })
        .unwrap();
        ap.advance(30.0).unwrap();
        let p = QueryParams::all(3);
        let first = ap.query(&p).unwrap();
        assert!(!first.lanes.is_empty());
        assert!(ap.query(&p).unwrap().is_empty());
        // the queue row crossing 4 m triggered one congestion event
        assert_eq!(ap.congestion_events().len(), 1);
    }

    #[test]
    fn unchanged_new_rows_are_not_resent() {
        let mut ap = ap();
        ap.ingest(&NodeReport { lane: 3, sent_at_s: 5.0, messages: vec![] }).unwrap();
        ap.advance(5.0).unwrap();
        let p = QueryParams { lanes: None, metrics: BTreeSet::from([Metric::Queue]), windows: 1 };
        assert_eq!(ap.query(&p).unwrap().lanes.len(), 1);
        ap.ingest(&NodeReport { lane: 3, sent_at_s: 10.0, messages: vec![] }).unwrap();
        ap.advance(10.0).unwrap();
        assert!(ap.query(&p).unwrap().is_empty());
    }

    #[test]
    fn unavailable_endpoint() {
        let mut ap = ap();
        ap.set_available(false);
        assert_eq!(ap.query(&QueryParams::all(1)), Err(EndpointError::Unavailable));
    }

    #[test]
    fn bad_messages_are_counted_not_fatal() {
        let mut ap = ap();
        ap.ingest(&NodeReport { lane: 3, sent_at_s: 1.0, messages: vec![msg(0, SensorEdge::Exit, 0.5)] }).unwrap();
        assert_eq!(ap.rejected_messages(), 1);
    }
}
