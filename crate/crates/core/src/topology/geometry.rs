//! Conflict derivation from drawn centre-line paths.
//!
//! Legs sit at equal angles, leg 1 pointing north and the rest following
//! clockwise. Traffic keeps right: a vehicle enters on the right half of its
//! street and leaves on the right half of the target street. Each movement is
//! drawn as a quadratic Bezier between the two stop points, with the control
//! point where the entry and exit lanes' lines meet.

use std::f64::consts::PI;

use super::graph::{ConflictGraph, GraphError};
use super::{CrossroadTopology, EventKind, EventSet, StreetId};

const APPROACH_RADIUS_M: f64 = 12.0;
const LANE_OFFSET_M: f64 = 1.75;
const PATH_SEGMENTS: usize = 32;
const EPS: f64 = 1e-9;

type Pt = (f64, f64);

fn sub(a: Pt, b: Pt) -> Pt {
    (a.0 - b.0, a.1 - b.1)
}

fn cross(a: Pt, b: Pt) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn right_of(v: Pt) -> Pt {
    (v.1, -v.0)
}

struct Layout {
    legs: usize,
}

impl Layout {
    fn outward(&self, leg: usize) -> Pt {
        let theta = PI / 2.0 - 2.0 * PI * (leg as f64 - 1.0) / self.legs as f64;
        (theta.cos(), theta.sin())
    }

    fn path(&self, from_leg: usize, to_leg: usize) -> Vec<Pt> {
        let u_in = self.outward(from_leg);
        let heading = (-u_in.0, -u_in.1);
        let r_in = right_of(heading);
        let start = (
            APPROACH_RADIUS_M * u_in.0 + LANE_OFFSET_M * r_in.0,
            APPROACH_RADIUS_M * u_in.1 + LANE_OFFSET_M * r_in.1,
        );
        let u_out = self.outward(to_leg);
        let r_out = right_of(u_out);
        let end = (
            APPROACH_RADIUS_M * u_out.0 + LANE_OFFSET_M * r_out.0,
            APPROACH_RADIUS_M * u_out.1 + LANE_OFFSET_M * r_out.1,
        );
        let control = if from_leg == to_leg {
            (0.0, 0.0)
        } else {
            let denom = cross(heading, u_out);
            if denom.abs() < EPS {
                ((start.0 + end.0) / 2.0, (start.1 + end.1) / 2.0)
            } else {
                let d = sub(end, start);
                let a = cross(d, u_out) / denom;
                let b = cross(d, heading) / denom;
                if a >= 0.0 && b <= 0.0 {
                    (start.0 + a * heading.0, start.1 + a * heading.1)
                } else {
                    (0.0, 0.0)
                }
            }
        };
        (0..=PATH_SEGMENTS)
            .map(|k| {
                let t = k as f64 / PATH_SEGMENTS as f64;
                let s = 1.0 - t;
                (
                    s * s * start.0 + 2.0 * s * t * control.0 + t * t * end.0,
                    s * s * start.1 + 2.0 * s * t * control.1 + t * t * end.1,
                )
            })
            .collect()
    }
}

fn orient(a: Pt, b: Pt, c: Pt) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn on_segment(a: Pt, b: Pt, p: Pt) -> bool {
    p.0 >= a.0.min(b.0) - EPS
        && p.0 <= a.0.max(b.0) + EPS
        && p.1 >= a.1.min(b.1) - EPS
        && p.1 <= a.1.max(b.1) + EPS
}

fn segments_meet(p1: Pt, p2: Pt, q1: Pt, q2: Pt) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS))
        && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS))
    {
        return true;
    }
    (d1.abs() <= EPS && on_segment(q1, q2, p1))
        || (d2.abs() <= EPS && on_segment(q1, q2, p2))
        || (d3.abs() <= EPS && on_segment(p1, p2, q1))
        || (d4.abs() <= EPS && on_segment(p1, p2, q2))
}

fn polylines_meet(a: &[Pt], b: &[Pt]) -> bool {
    a.windows(2)
        .any(|s| b.windows(2).any(|t| segments_meet(s[0], s[1], t[0], t[1])))
}

/// Derives the conflict graph of `events` from the crossroad geometry.
pub fn build_conflict_graph(
    topology: &CrossroadTopology,
    events: &EventSet,
) -> Result<ConflictGraph, GraphError> {
    if topology.entering != topology.leaving {
        return Err(GraphError::GeometryUnderdetermined(format!(
            "{} entering and {} leaving streets have no angular layout",
            topology.entering, topology.leaving
        )));
    }
    // leaving street -> leg it sits on
    let mut out_leg = vec![0usize; topology.leaving + 1];
    for out in 1..=topology.leaving {
        out_leg[out] = topology.paired_in(out).ok_or_else(|| {
            GraphError::GeometryUnderdetermined(format!("OUT{out} is not paired with any entering street"))
        })?;
    }
    let layout = Layout { legs: topology.entering };
    let street_ok = |s: StreetId, max: usize| s >= 1 && s <= max;
    let mut paths = Vec::with_capacity(events.len());
    for e in events.iter() {
        match e.kind {
            EventKind::Vehicle { from, to } => {
                if !street_ok(from, topology.entering) || !street_ok(to, topology.leaving) {
                    return Err(GraphError::GeometryUnderdetermined(format!(
                        "{e} uses a street outside the topology"
                    )));
                }
                paths.push(Some(layout.path(from, out_leg[to])));
            }
            EventKind::Pedestrian { crossing } => {
                if crossing == 0 || crossing > topology.crossing_streets.len() {
                    return Err(GraphError::GeometryUnderdetermined(format!(
                        "C{crossing} has no street assigned"
                    )));
                }
                paths.push(None);
            }
        }
    }

    let mut g = ConflictGraph::empty(events.len());
    for a in 0..events.len() {
        for b in a + 1..events.len() {
            let conflict = match (events.kind(a), events.kind(b)) {
                (EventKind::Pedestrian { .. }, EventKind::Pedestrian { .. }) => false,
                (EventKind::Pedestrian { crossing }, EventKind::Vehicle { from, to })
                | (EventKind::Vehicle { from, to }, EventKind::Pedestrian { crossing }) => {
                    let street = topology.crossing_streets[crossing - 1];
                    from == street || Some(to) == topology.paired_out(street)
                }
                (EventKind::Vehicle { from: f1, to: t1 }, EventKind::Vehicle { from: f2, to: t2 }) => {
                    if f1 == f2 {
                        false
                    } else if t1 == t2 {
                        true
                    } else {
                        let (pa, pb) = (paths[a].as_ref().unwrap(), paths[b].as_ref().unwrap());
                        polylines_meet(pa, pb)
                    }
                }
            };
            if conflict {
                g.set(a, b);
            }
        }
    }
    Ok(g)
}
