use std::collections::BTreeSet;

use super::{ControlError, ControllerConfig, ControllerState, Mode, PhaseDecision};
use crate::topology::{ConflictGraph, EventSet, StreetId};

/// Requested events whose counter equals the minimum counter among all
/// requested events.
pub fn min_counter_events(counters: &[u64], requested: &[bool]) -> Result<BTreeSet<usize>, ControlError> {
    if counters.len() != requested.len() {
        return Err(ControlError::LengthMismatch {
            what: "requested flags",
            got: requested.len(),
            expected: counters.len(),
        });
    }
    let min = counters.iter().zip(requested).filter(|(_, &r)| r).map(|(&t, _)| t).min();
    Ok(match min {
        None => BTreeSet::new(),
        Some(m) => (0..counters.len()).filter(|&i| requested[i] && counters[i] == m).collect(),
    })
}

fn check_sizes(
    state: &ControllerState,
    graph: &ConflictGraph,
    events: &EventSet,
    fitness: &[f64],
) -> Result<(), ControlError> {
    let n = graph.len();
    let checks = [
        ("event set", events.len()),
        ("counters", state.counters.len()),
        ("red waits", state.red_wait_s.len()),
        ("requested flags", state.requested.len()),
        ("raise counts", state.raised_since.len()),
        ("fitness scores", fitness.len()),
    ];
    for (what, got) in checks {
        if got != n {
            return Err(ControlError::LengthMismatch { what, got, expected: n });
        }
    }
    if let Some(&bad) = state.current_green.iter().find(|&&i| i >= n) {
        return Err(ControlError::InvalidInput(format!("current green holds unknown event {bad}")));
    }
    if fitness.iter().any(|f| f.is_nan()) {
        return Err(ControlError::InvalidInput("fitness score is NaN".into()));
    }
    Ok(())
}

fn phase_duration(chosen: &BTreeSet<usize>, fitness: &[f64], config: &ControllerConfig) -> f64 {
    let demand: f64 = chosen.iter().map(|&i| fitness[i].max(0.0)).sum();
    let share = (demand / config.saturation_demand).clamp(0.0, 1.0);
    config.min_green_s + (config.max_green_s - config.min_green_s) * share
}

/// Picks the next green set.
///
/// Mandatory events (fairness) go first, longest red first, then the
/// best-scoring least-served event seeds the set. Requested events close to
/// their red budget are added oldest first, then the rest by descending
/// score. The phase is cut short when a left-out event would otherwise
/// overrun its budget before the next decision.
pub fn select_phase(
    state: &ControllerState,
    graph: &ConflictGraph,
    events: &EventSet,
    fitness: &[f64],
    config: &ControllerConfig,
) -> Result<PhaseDecision, ControlError> {
    check_sizes(state, graph, events, fitness)?;
    let n = graph.len();
    let decision = |green_set: BTreeSet<usize>, duration_s: f64| PhaseDecision {
        green_set,
        duration_s,
        countdown_lead_s: config.countdown_lead_s,
    };

    if config.mode == Mode::PedestrianScramble {
        let all = events.pedestrian_positions().into_iter().collect::<BTreeSet<_>>();
        if !graph.is_compatible_set(&all.iter().copied().collect::<Vec<_>>())? {
            return Err(ControlError::InvalidInput("pedestrian crossings conflict with each other".into()));
        }
        let duration = phase_duration(&all, fitness, config);
        return Ok(decision(all, duration));
    }

    let eligible = |i: usize| {
        state.requested[i] && (config.mode != Mode::VehicleDecongestion || events.kind(i).is_vehicle())
    };
    let requested: Vec<bool> = (0..n).map(eligible).collect();
    if !requested.iter().any(|&r| r) {
        return Ok(decision(state.current_green.clone(), config.min_green_s));
    }

    let raise_limit = 2 * (n as u64).saturating_sub(1);
    let mut mandatory: Vec<usize> = (0..n)
        .filter(|&i| {
            requested[i]
                && (state.red_wait_s[i] > config.max_red_wait_s
                    || (config.raise_twice_rule && state.raised_since[i] >= raise_limit))
        })
        .collect();
    mandatory.sort_by(|&a, &b| {
        state.red_wait_s[b]
            .total_cmp(&state.red_wait_s[a])
            .then(state.counters[a].cmp(&state.counters[b]))
            .then(a.cmp(&b))
    });

    let mut chosen = BTreeSet::new();
    for &i in &mandatory {
        if graph.compatible_with(&chosen, i) {
            chosen.insert(i);
        }
    }

    if chosen.is_empty() {
        let seeds = min_counter_events(&state.counters, &requested)?;
        let seed = seeds
            .iter()
            .copied()
            .max_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(b.cmp(&a)))
            .expect("some event is requested");
        chosen.insert(seed);
    }

    // events that could run out of red budget before the next decision
    let horizon = config.max_red_wait_s - config.max_green_s - config.countdown_lead_s;
    let mut due: Vec<usize> =
        (0..n).filter(|&i| requested[i] && !chosen.contains(&i) && state.red_wait_s[i] > horizon).collect();
    due.sort_by(|&a, &b| {
        state.red_wait_s[b]
            .total_cmp(&state.red_wait_s[a])
            .then(state.counters[a].cmp(&state.counters[b]))
            .then(a.cmp(&b))
    });
    for i in due {
        if graph.compatible_with(&chosen, i) {
            chosen.insert(i);
        }
    }

    let mut rest: Vec<usize> = (0..n).filter(|&i| requested[i] && !chosen.contains(&i)).collect();
    rest.sort_by(|&a, &b| {
        fitness[b]
            .total_cmp(&fitness[a])
            .then(state.counters[a].cmp(&state.counters[b]))
            .then(a.cmp(&b))
    });
    for i in rest {
        if graph.compatible_with(&chosen, i) {
            chosen.insert(i);
        }
    }

    // a left-out event must get another decision before its red budget ends
    let budget = config.max_red_wait_s + config.max_green_s;
    let slack = (0..n)
        .filter(|&i| requested[i] && !chosen.contains(&i))
        .map(|i| budget - state.red_wait_s[i])
        .fold(f64::INFINITY, f64::min);
    let duration = phase_duration(&chosen, fitness, config).min(slack).max(config.min_green_s);
    Ok(decision(chosen, duration))
}

/// Green set for an emergency vehicle arriving on `approach`: a maximal
/// compatible subset of the approach's movements, taken in index order.
pub fn preempt_emergency(
    graph: &ConflictGraph,
    events: &EventSet,
    approach: StreetId,
    config: &ControllerConfig,
) -> Result<PhaseDecision, ControlError> {
    if approach == 0 || approach > events.entering_streets() {
        return Err(ControlError::UnknownStreet(approach));
    }
    if graph.len() != events.len() {
        return Err(ControlError::LengthMismatch { what: "event set", got: events.len(), expected: graph.len() });
    }
    let mut chosen = BTreeSet::new();
    for i in events.approach_positions(approach) {
        if graph.compatible_with(&chosen, i) {
            chosen.insert(i);
        }
    }
    Ok(PhaseDecision {
        green_set: chosen,
        duration_s: config.max_green_s,
        countdown_lead_s: config.countdown_lead_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::CounterScope;
    use crate::topology::{build_conflict_graph, enumerate_events, CrossroadTopology};
    use proptest::prelude::*;

    fn config() -> ControllerConfig {
        ControllerConfig::default()
    }

    #[test]
    fn min_counters() {
        assert_eq!(min_counter_events(&[3, 1, 1], &[true; 3]).unwrap(), BTreeSet::from([1, 2]));
        assert_eq!(min_counter_events(&[2, 2], &[true, true]).unwrap(), BTreeSet::from([0, 1]));
        assert!(min_counter_events(&[2, 2], &[false, false]).unwrap().is_empty());
        assert!(min_counter_events(&[2, 2], &[false]).is_err());
        assert_eq!(min_counter_events(&[0, 5], &[false, true]).unwrap(), BTreeSet::from([1]));
    }

    #[test]
    fn fairness_forces_the_waiting_event() {
        let g = ConflictGraph::from_edges(2, &[(0, 1)]).unwrap();
        let events = EventSet::synthetic(2, 0);
        let mut s = ControllerState::new(2);
        s.requested = vec![true, true];
        s.counters = vec![9, 0];
        s.red_wait_s = vec![120.0, 10.0];
        let d = select_phase(&s, &g, &events, &[0.0, 5.0], &config()).unwrap();
        assert_eq!(d.green_set, BTreeSet::from([0]));
    }

    #[test]
    fn longest_red_mandatory_goes_first() {
        let g = ConflictGraph::from_edges(2, &[(0, 1)]).unwrap();
        let events = EventSet::synthetic(2, 0);
        let mut s = ControllerState::new(2);
        s.requested = vec![true, true];
        s.counters = vec![1, 4];
        s.red_wait_s = vec![95.0, 110.0];
        let d = select_phase(&s, &g, &events, &[3.0, 3.0], &config()).unwrap();
        assert_eq!(d.green_set, BTreeSet::from([1]));
        // event 0 is left out with 25 s of budget left
        assert!((d.duration_s - 25.0).abs() < 1e-9);
    }

    #[test]
    fn nothing_requested_holds() {
        let g = ConflictGraph::empty(3);
        let events = EventSet::synthetic(3, 0);
        let mut s = ControllerState::new(3);
        s.current_green = BTreeSet::from([1]);
        let d = select_phase(&s, &g, &events, &[0.0; 3], &config()).unwrap();
        assert_eq!(d.green_set, BTreeSet::from([1]));
        assert_eq!(d.duration_s, config().min_green_s);
    }

    #[test]
    fn modes() {
        let t = CrossroadTopology::four_leg();
        let events = enumerate_events(&t, true);
        let g = build_conflict_graph(&t, &events).unwrap();
        let mut s = ControllerState::new(16);
        s.requested = vec![true; 16];
        let mut fit = vec![0.0; 16];
        for f in &mut fit[12..] {
            *f = 10.0;
        }
        let mut c = config();
        c.mode = Mode::PedestrianScramble;
        let d = select_phase(&s, &g, &events, &fit, &c).unwrap();
        assert_eq!(d.green_set, BTreeSet::from([12, 13, 14, 15]));
        c.mode = Mode::VehicleDecongestion;
        let d = select_phase(&s, &g, &events, &fit, &c).unwrap();
        assert!(d.green_set.iter().all(|&i| i < 12));
    }

    #[test]
    fn emergency_on_approach_one() {
        let t = CrossroadTopology::four_leg();
        let events = enumerate_events(&t, true);
        let g = build_conflict_graph(&t, &events).unwrap();
        let d = preempt_emergency(&g, &events, 1, &config()).unwrap();
        assert!(!d.green_set.is_empty());
        assert!(d.green_set.iter().all(|&i| i < 3));
        assert!(preempt_emergency(&g, &events, 5, &config()).is_err());
        assert!(preempt_emergency(&g, &events, 0, &config()).is_err());
    }

    #[test]
    fn degenerate_approach_grants_nothing() {
        let mut t = CrossroadTopology::symmetric(1);
        t.crossings = 0;
        t.crossing_streets.clear();
        let events = enumerate_events(&t, true);
        let g = build_conflict_graph(&t, &events).unwrap();
        assert!(preempt_emergency(&g, &events, 1, &config()).unwrap().green_set.is_empty());
    }

    #[test]
    fn duration_stays_in_bounds() {
        let g = ConflictGraph::empty(4);
        let events = EventSet::synthetic(4, 0);
        let mut s = ControllerState::new(4);
        s.requested = vec![true; 4];
        for scale in [0.0, 0.1, 1.0, 100.0] {
            let d = select_phase(&s, &g, &events, &[scale; 4], &config()).unwrap();
            assert!(d.duration_s >= config().min_green_s && d.duration_s <= config().max_green_s);
        }
    }

    proptest! {
        #[test]
        fn selection_is_pure(seed_bits in proptest::collection::vec(any::<bool>(), 45), fit in proptest::collection::vec(-1.0..3.0f64, 10)) {
            let mut edges = Vec::new();
            let mut k = 0;
            for a in 0..10 {
                for b in a + 1..10 {
                    if seed_bits[k] { edges.push((a, b)); }
                    k += 1;
                }
            }
            let g = ConflictGraph::from_edges(10, &edges).unwrap();
            let events = EventSet::synthetic(10, 0);
            let mut s = ControllerState::new(10);
            s.requested = vec![true; 10];
            let a = select_phase(&s, &g, &events, &fit, &config()).unwrap();
            let b = select_phase(&s, &g, &events, &fit, &config()).unwrap();
            prop_assert_eq!(&a, &b);
            let v: Vec<usize> = a.green_set.iter().copied().collect();
            prop_assert!(g.is_compatible_set(&v).unwrap());
            let next = crate::control::on_lights_changed(&s, &a, CounterScope::GrantedOnly);
            prop_assert_eq!(next.current_green, a.green_set);
        }
    }
}
