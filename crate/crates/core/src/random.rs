//! Seeded generators of small random models: lifted states, schemas and
//! sensors. Used by the property tests and the acceptance checks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::action::{ActionSchema, Constraint, Effect, Source};
use crate::distribution::Distribution;
use crate::observation::SensorSpec;
use crate::prob::{self, Prob};
use crate::state::{Entity, Group, LiftedState, RawState};
use crate::value::{Slot, Value};

pub const LOCATIONS: [&str; 3] = ["a", "b", "c"];
pub const ITEMS: [&str; 3] = ["none", "x", "y"];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty")
}

fn random_categorical<R: Rng>(rng: &mut R, values: &[&str]) -> Distribution {
    let k = rng.gen_range(2..=values.len());
    let mut chosen: Vec<&str> = values.to_vec();
    chosen.shuffle(rng);
    chosen.truncate(k);
    let raw: Vec<u64> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
    let total: u64 = raw.iter().sum();
    let m: BTreeMap<Value, Prob> = chosen
        .iter()
        .zip(&raw)
        .map(|(v, &w)| (Value::new(*v), prob::ratio(w, total)))
        .collect();
    Distribution::categorical_exact(m).expect("weights sum to one")
}

/// Label for one slot of one group, chosen among a Dirac, a categorical, or
/// a draw from the shared urn `urn` when one is given.
fn slot_label<R: Rng>(rng: &mut R, raw: &mut RawState, values: &[&str], urn: Option<u32>) -> u32 {
    match (rng.gen_range(0..3u8), urn) {
        (0, _) => raw.add_label(Distribution::dirac(pick(rng, values))),
        (2, Some(l)) => l,
        _ => raw.add_label(random_categorical(rng, values)),
    }
}

fn random_raw<R: Rng>(rng: &mut R) -> RawState {
    let mut raw = RawState::default();
    let n_groups = rng.gen_range(1..=3);
    let counts: Vec<u32> = (0..n_groups).map(|_| rng.gen_range(1..=3)).collect();
    let total: u32 = counts.iter().sum();

    let with_id = rng.gen_bool(0.6);
    let id_urn = with_id.then(|| {
        let extra = rng.gen_range(0..=1);
        let ids: Vec<String> = (1..=total + extra).map(|i| format!("i{i}")).collect();
        raw.add_label(Distribution::urn(ids.iter().map(String::as_str)).expect("non-empty"))
    });
    let loc_urn = rng.gen_bool(0.4).then(|| {
        let mut locs = Vec::new();
        for _ in 0..total + rng.gen_range(0..=1) {
            locs.push(pick(rng, &LOCATIONS));
        }
        raw.add_label(Distribution::urn(locs).expect("non-empty"))
    });
    let with_hold = rng.gen_bool(0.5);

    for &count in &counts {
        let mut slots = vec![(Slot::new("loc"), slot_label(rng, &mut raw, &LOCATIONS, loc_urn))];
        if let Some(l) = id_urn {
            slots.push((Slot::new("ID"), l));
        }
        if with_hold {
            slots.push((Slot::new("hold"), slot_label(rng, &mut raw, &ITEMS, None)));
        }
        raw.groups.push(Group { entity: Entity::new(slots), count });
    }
    // an urn nobody ended up drawing from is dropped by rebuilding
    let used: Vec<bool> = (0..raw.labels.len() as u32)
        .map(|l| raw.groups.iter().any(|g| g.entity.slots().iter().any(|(_, x)| *x == l)))
        .collect();
    if used.iter().all(|&u| u) {
        return raw;
    }
    let mut map = vec![0u32; used.len()];
    let mut out = RawState::default();
    for (l, d) in raw.labels.iter().enumerate() {
        if used[l] {
            map[l] = out.add_label(d.clone());
        }
    }
    for g in raw.groups {
        let slots = g.entity.slots().iter().map(|(s, l)| (s.clone(), map[*l as usize])).collect();
        out.groups.push(Group { entity: Entity::new(slots), count: g.count });
    }
    out
}

/// A random valid lifted state with at most `max_grounds` ground states.
/// Slots: `loc` over [`LOCATIONS`], optionally `ID` from a shared urn and
/// `hold` over [`ITEMS`].
pub fn random_state<R: Rng>(rng: &mut R, max_grounds: usize) -> LiftedState {
    loop {
        let Ok(s) = random_raw(rng).into_lifted() else { continue };
        if s.ground(max_grounds).is_ok() {
            return s;
        }
    }
}

fn loc_constraint<R: Rng>(rng: &mut R) -> Constraint {
    match rng.gen_range(0..4) {
        0 | 1 => Constraint::eq("loc", pick(rng, &LOCATIONS)),
        2 => Constraint::neq("loc", pick(rng, &LOCATIONS)),
        _ => {
            let mut v = LOCATIONS.to_vec();
            v.shuffle(rng);
            Constraint::one_of("loc", v[..2].iter().copied())
        }
    }
}

fn rate<R: Rng>(rng: &mut R) -> f64 {
    *[1.0, 1.0, 2.0, 0.5].choose(rng).expect("non-empty")
}

fn set(participant: usize, slot: &str, source: Source) -> Effect {
    Effect::Set { participant, slot: Slot::new(slot), source }
}

fn value(v: &str) -> Source {
    Source::Value(Value::new(v))
}

/// One random schema over the slots used by [`random_state`].
pub fn random_schema<R: Rng>(rng: &mut R, name: &str) -> ActionSchema {
    let to = pick(rng, &LOCATIONS);
    let (participants, effects) = match rng.gen_range(0..8) {
        0..=2 => (vec![vec![loc_constraint(rng)]], vec![set(0, "loc", value(to))]),
        3 => (
            vec![vec![loc_constraint(rng), Constraint::eq("hold", "none")]],
            vec![set(0, "hold", value(pick(rng, &ITEMS[1..])))],
        ),
        4 => (
            vec![
                vec![Constraint::neq("hold", "none")],
                vec![Constraint::eq("hold", "none"), loc_constraint(rng)],
            ],
            vec![
                set(1, "hold", Source::Copy { participant: 0, slot: Slot::new("hold") }),
                set(0, "hold", value("none")),
            ],
        ),
        5 => (
            vec![vec![loc_constraint(rng)], vec![loc_constraint(rng)]],
            vec![set(1, "loc", Source::Copy { participant: 0, slot: Slot::new("loc") })],
        ),
        6 => (vec![vec![Constraint::eq("loc", to)]], vec![Effect::Consume(0)]),
        _ => (
            vec![vec![loc_constraint(rng)]],
            vec![Effect::Produce(vec![
                (Slot::new("loc"), value(to)),
                (Slot::new("tag"), Source::Copy { participant: 0, slot: Slot::new("loc") }),
            ])],
        ),
    };
    ActionSchema::new(name, participants, effects, rate(rng)).expect("well-formed schema")
}

/// Between one and `max` random schemas.
pub fn random_schemas<R: Rng>(rng: &mut R, max: usize) -> Vec<ActionSchema> {
    let n = rng.gen_range(1..=max.max(1));
    (0..n).map(|i| random_schema(rng, &format!("s{i}"))).collect()
}

/// A random presence or identify sensor on `loc`, noise-free or with small
/// noise.
pub fn random_sensor<R: Rng>(rng: &mut R) -> SensorSpec {
    let at = pick(rng, &LOCATIONS);
    let spec = if rng.gen_bool(0.5) {
        SensorSpec::presence("loc", at)
    } else {
        SensorSpec::identify("loc", at, "ID").with_universe((1..=10).map(|i| format!("i{i}")))
    };
    if rng.gen_bool(0.5) {
        spec
    } else {
        spec.with_noise(0.1, 0.2).expect("valid noise")
    }
}
