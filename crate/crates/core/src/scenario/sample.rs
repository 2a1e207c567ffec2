//! Ground-truth and observation sampling.

use std::collections::BTreeMap;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Scenario, Trace, TraceStep};
use crate::distribution::Distribution;
use crate::error::Result;
use crate::observation::{Observation, Reading, SensorKind, SensorSpec};
use crate::oracle::ground_transition;
use crate::prob::{self, Prob};
use crate::state::{GroundEntity, GroundState, LiftedState};
use crate::value::Value;

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [(T, Prob)]) -> &'a T {
    let weights: Vec<f64> = items.iter().map(|(_, p)| prob::to_f64(p)).collect();
    let i = WeightedIndex::new(&weights).expect("positive weights").sample(rng);
    &items[i].0
}

/// Draws one ground state from a lifted state without enumerating it.
fn sample_ground(s: &LiftedState, rng: &mut ChaCha8Rng) -> GroundState {
    let mut urns: Vec<Option<BTreeMap<Value, u32>>> = s
        .labels()
        .iter()
        .map(|d| match d {
            Distribution::Urn(m) => Some(m.clone()),
            _ => None,
        })
        .collect();
    let mut entities = Vec::new();
    for g in s.groups() {
        for _ in 0..g.count {
            let mut e = BTreeMap::new();
            for (slot, l) in g.entity.slots() {
                let l = *l as usize;
                let v = match &s.labels()[l] {
                    Distribution::Dirac(v) => v.clone(),
                    Distribution::Categorical(m) => {
                        let items: Vec<(Value, Prob)> = m.iter().map(|(v, p)| (v.clone(), p.clone())).collect();
                        pick(rng, &items).clone()
                    }
                    Distribution::Urn(_) => {
                        let urn = urns[l].as_mut().expect("urn label");
                        let items: Vec<(Value, Prob)> =
                            urn.iter().filter(|(_, &c)| c > 0).map(|(v, &c)| (v.clone(), prob::int(c as u64))).collect();
                        let v = pick(rng, &items).clone();
                        *urn.get_mut(&v).expect("drawn value") -= 1;
                        v
                    }
                };
                e.insert(slot.clone(), v);
            }
            entities.push(GroundEntity(e));
        }
    }
    GroundState::new(entities)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    p > 0.0 && rng.gen_bool(p)
}

fn sample_reading(s: &GroundState, spec: &SensorSpec, rng: &mut ChaCha8Rng) -> Reading {
    let at = |e: &&GroundEntity| e.get(&spec.watched_slot) == Some(&spec.watched_value);
    match &spec.kind {
        SensorKind::Presence => {
            let occupied = s.entities().iter().any(|e| at(&e));
            let r = if occupied {
                !bernoulli(rng, spec.false_negative())
            } else {
                bernoulli(rng, spec.false_positive())
            };
            Reading::Presence(r)
        }
        SensorKind::Identify { id_slot, universe } => {
            let held: Vec<&Value> = s.entities().iter().filter(at).filter_map(|e| e.get(id_slot)).collect();
            let mut ids: std::collections::BTreeSet<Value> = held
                .iter()
                .filter(|_| !bernoulli(rng, spec.false_negative()))
                .map(|v| (*v).clone())
                .collect();
            if let Some(u) = universe {
                for v in u {
                    if !held.contains(&v) && bernoulli(rng, spec.false_positive()) {
                        ids.insert(v.clone());
                    }
                }
            }
            Reading::Identify(ids)
        }
    }
}

fn sample_observation(s: &GroundState, sensors: &BTreeMap<String, SensorSpec>, rng: &mut ChaCha8Rng) -> Observation {
    Observation {
        readings: sensors
            .iter()
            .map(|(id, spec)| (id.clone(), sample_reading(s, spec, rng)))
            .collect(),
    }
}

/// Samples a ground-truth run of `horizon` steps and the sensor readings
/// along it. The initial state is drawn from the initial belief; each step
/// draws a maximal compound action with probability proportional to its
/// weight. Deterministic in `seed`.
pub fn sample_trace(sc: &Scenario, seed: u64, horizon: u32) -> Result<Trace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyps: Vec<(LiftedState, Prob)> =
        sc.initial.hypotheses().iter().map(|(s, w)| (s.clone(), w.clone())).collect();
    let mut state = sample_ground(pick(&mut rng, &hyps), &mut rng);
    let mut steps = Vec::new();
    for t in 0..=horizon {
        if t > 0 {
            let tr = ground_transition(state.entities(), &sc.schemas)?;
            let mut next = tr.untouched;
            for f in &tr.factors {
                next.extend(pick(&mut rng, f).iter().cloned());
            }
            state = GroundState::new(next);
        }
        let observation = sample_observation(&state, &sc.sensors, &mut rng);
        steps.push(TraceStep { t, observation, truth: Some(state.clone()) });
    }
    Ok(Trace { scenario: sc.name.clone(), seed: Some(seed), steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::warehouse;

    #[test]
    fn deterministic_and_sized() {
        let sc = warehouse(10, 33, 10).unwrap();
        let a = sample_trace(&sc, 7, 33).unwrap();
        assert_eq!(a.steps.len(), 34);
        assert_eq!(a, sample_trace(&sc, 7, 33).unwrap());
        assert_ne!(a, sample_trace(&sc, 8, 33).unwrap());
        let z = sample_trace(&sc, 7, 0).unwrap();
        assert_eq!(z.steps.len(), 1);
    }

    #[test]
    fn initial_ids_are_distinct() {
        let sc = warehouse(10, 0, 10).unwrap();
        let t = sample_trace(&sc, 3, 0).unwrap();
        let truth = t.steps[0].truth.as_ref().unwrap();
        let ids: std::collections::BTreeSet<_> =
            truth.entities().iter().map(|e| e.get(&"ID".into()).unwrap().clone()).collect();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn moves_are_along_edges() {
        let sc = warehouse(4, 20, 0).unwrap();
        let t = sample_trace(&sc, 11, 20).unwrap();
        let loc = |s: &GroundState, id: &str| {
            s.entities()
                .iter()
                .find(|e| e.get(&"ID".into()) == Some(&Value::new(id)))
                .unwrap()
                .get(&"loc".into())
                .unwrap()
                .clone()
        };
        for w in t.steps.windows(2) {
            let (a, b) = (w[0].truth.as_ref().unwrap(), w[1].truth.as_ref().unwrap());
            for id in ["fl1", "fl2", "fl3", "fl4"] {
                let (x, y) = (loc(a, id), loc(b, id));
                assert!(x == y || sc.adjacent(&x, &y));
            }
        }
    }
}
