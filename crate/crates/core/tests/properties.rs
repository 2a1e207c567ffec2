use std::collections::{BTreeMap, BTreeSet};

use lifted_filter::action::{apply_compound, enumerate_maximal_compounds, successors, successors_by_compounds};
use lifted_filter::filter::{Filter, FilterConfig, LiftedBeliefState};
use lifted_filter::observation::{observe, presence_likelihood, PresenceLikelihood, Reading, SensorKind, SensorSpec};
use lifted_filter::oracle::{ground_likelihood, GroundFilter};
use lifted_filter::random::{random_schemas, random_sensor, random_state, LOCATIONS};
use lifted_filter::scenario::{sample_trace, Scenario};
use lifted_filter::state::{collapse_to_ground, marginal, merge, mix, split_on_slot_value, unsplit, Entity, Group, RawState, DEFAULT_GUARD};
use lifted_filter::{prob, GroundState, LiftedState, Prob, Slot, Value};
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mix = BTreeMap<GroundState, Prob>;

fn ground_mix<'a>(parts: impl IntoIterator<Item = (&'a Prob, &'a LiftedState)>) -> Mix {
    let mut out = Mix::new();
    for (w, s) in parts {
        for (g, p) in s.ground(DEFAULT_GUARD).unwrap() {
            *out.entry(g).or_insert_with(prob::zero) += w * p;
        }
    }
    out.retain(|_, p| !p.is_zero());
    out
}

fn ground_of(s: &LiftedState) -> Mix {
    ground_mix([(&prob::one(), s)])
}

/// Some value `slot` can take in `s`.
fn some_value(s: &LiftedState, slot: &Slot, rng: &mut ChaCha8Rng) -> Option<Value> {
    let values: BTreeSet<Value> = s
        .groups()
        .iter()
        .filter_map(|g| g.entity.label(slot))
        .flat_map(|l| s.distribution(l).support().into_iter().cloned())
        .collect();
    let values: Vec<Value> = values.into_iter().collect();
    values.choose(rng).cloned()
}

fn some_slot(s: &LiftedState, rng: &mut ChaCha8Rng) -> Slot {
    let slots: BTreeSet<Slot> = s
        .groups()
        .iter()
        .flat_map(|g| g.entity.slots().iter().map(|(s, _)| s.clone()))
        .collect();
    slots.into_iter().collect::<Vec<_>>().choose(rng).unwrap().clone()
}

fn shuffled_raw(s: &LiftedState, rng: &mut ChaCha8Rng) -> RawState {
    let raw = s.to_raw();
    let mut perm: Vec<u32> = (0..raw.labels.len() as u32).collect();
    perm.shuffle(rng);
    let mut labels = raw.labels.clone();
    for (old, &new) in perm.iter().enumerate() {
        labels[new as usize] = raw.labels[old].clone();
    }
    let mut groups: Vec<Group> = raw
        .groups
        .iter()
        .map(|g| Group {
            entity: Entity::new(g.entity.slots().iter().map(|(sl, l)| (sl.clone(), perm[*l as usize])).collect()),
            count: g.count,
        })
        .collect();
    groups.shuffle(rng);
    RawState { groups, labels }
}

/// Ground-level one-step distribution from a lifted start.
fn ground_predict(s: &LiftedState, schemas: &[lifted_filter::action::ActionSchema]) -> Mix {
    let mut gf = GroundFilter::new(ground_of(s), schemas.to_vec(), BTreeMap::new(), DEFAULT_GUARD);
    gf.predict().unwrap();
    gf.belief()
}

fn reading_for(spec: &SensorSpec, rng: &mut ChaCha8Rng) -> Reading {
    match &spec.kind {
        SensorKind::Presence => Reading::Presence(rng.gen_bool(0.5)),
        SensorKind::Identify { .. } => {
            let ids: BTreeSet<Value> =
                (1..=4).filter(|_| rng.gen_bool(0.3)).map(|i| Value::new(format!("i{i}"))).collect();
            Reading::Identify(ids)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_preserves_the_ground_distribution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 10_000);
        let slot = some_slot(&s, &mut rng);
        let v = some_value(&s, &slot, &mut rng).unwrap();
        let branches = split_on_slot_value(&s, &slot, &v).unwrap();
        let total: Prob = branches.iter().map(|(w, _)| w.clone()).sum();
        prop_assert!(total.is_one());
        prop_assert_eq!(ground_mix(branches.iter().map(|(w, s)| (w, s))), ground_of(&s));
    }

    #[test]
    fn merge_preserves_weight_and_ground_distribution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 2_000);
        let slot = some_slot(&s, &mut rng);
        let v = some_value(&s, &slot, &mut rng).unwrap();
        let mut parts = split_on_slot_value(&s, &slot, &v).unwrap();
        let again: Vec<_> = parts.iter().map(|(w, st)| (w / prob::int(2), st.clone())).collect();
        for p in &mut parts {
            p.0 = &p.0 / prob::int(2);
        }
        parts.extend(again);
        let before = ground_mix(parts.iter().map(|(w, s)| (w, s)));
        let merged = merge(parts.clone());
        let keys: BTreeSet<&LiftedState> = merged.iter().map(|(_, s)| s).collect();
        prop_assert_eq!(keys.len(), merged.len());
        prop_assert!(merged.len() * 2 <= parts.len());
        let total: Prob = merged.iter().map(|(w, _)| w.clone()).sum();
        prop_assert!(total.is_one());
        prop_assert_eq!(ground_mix(merged.iter().map(|(w, s)| (w, s))), before);
    }

    #[test]
    fn compaction_preserves_the_ground_distribution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 2_000);
        let mut map: BTreeMap<LiftedState, Prob> = BTreeMap::from([(s.clone(), prob::one())]);
        for _ in 0..2 {
            let mut next = BTreeMap::new();
            for (st, w) in &map {
                let slot = some_slot(st, &mut rng);
                let v = some_value(st, &slot, &mut rng).unwrap();
                for (q, b) in split_on_slot_value(st, &slot, &v).unwrap() {
                    *next.entry(b).or_insert_with(prob::zero) += w * q;
                }
            }
            map = next;
        }
        let before = map.len();
        unsplit(&mut map);
        mix(&mut map);
        collapse_to_ground(&mut map, 4);
        prop_assert!(map.len() <= before);
        let total: Prob = map.values().sum();
        prop_assert!(total.is_one());
        prop_assert_eq!(ground_mix(map.iter().map(|(s, w)| (w, s))), ground_of(&s));
    }

    #[test]
    fn canonical_form_ignores_label_names_and_group_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 10_000);
        prop_assert_eq!(&s.canonicalize(), &s);
        prop_assert_eq!(shuffled_raw(&s, &mut rng).canonicalize(), s);
    }

    #[test]
    fn grounding_is_a_distribution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 10_000);
        let g = s.ground(DEFAULT_GUARD).unwrap();
        prop_assert!(!g.is_empty());
        let total: Prob = g.iter().map(|(_, p)| p.clone()).sum();
        prop_assert!(total.is_one());
    }

    #[test]
    fn marginal_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 10_000);
        let (sel, q) = (Slot::new("ID"), Slot::new("loc"));
        let Some(v) = some_value(&s, &sel, &mut rng) else { return Ok(()) };
        let m = marginal(&s, &sel, &v, &q).unwrap();
        // mass is missing where no entity holds the selector value
        let mut brute: BTreeMap<Value, Prob> = BTreeMap::new();
        for (g, p) in s.ground(DEFAULT_GUARD).unwrap() {
            if let Some(e) = g.entities().iter().find(|e| e.get(&sel) == Some(&v)) {
                *brute.entry(e.get(&q).unwrap().clone()).or_insert_with(prob::zero) += p;
            }
        }
        prop_assert_eq!(m, brute);
    }

    #[test]
    fn compound_weights_sum_to_one_and_stay_valid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 1_000);
        let schemas = random_schemas(&mut rng, 3);
        for (w, st) in lifted_filter::action::resolve(&s, &schemas).unwrap().0 {
            let cs = enumerate_maximal_compounds(&st, &schemas).unwrap();
            let total: Prob = cs.iter().map(|(_, p)| p.clone()).sum();
            prop_assert!(total.is_one(), "{w}");
            for (c, _) in &cs {
                let next = apply_compound(&st, &schemas, c).unwrap();
                prop_assert!(next.validate().is_ok());
            }
        }
    }

    #[test]
    fn lifted_step_commutes_with_ground_step(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 1_000);
        let schemas = random_schemas(&mut rng, 3);
        let expected = ground_predict(&s, &schemas);
        let fast = successors(&s, &schemas).unwrap().states;
        prop_assert_eq!(ground_mix(fast.iter().map(|(w, s)| (w, s))), expected.clone());
        let slow = successors_by_compounds(&s, &schemas).unwrap();
        prop_assert_eq!(ground_mix(slow.iter().map(|(w, s)| (w, s))), expected);
    }

    #[test]
    fn presence_likelihoods_are_complementary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 10_000);
        let at = LOCATIONS.choose(&mut rng).unwrap();
        let spec = SensorSpec::presence("loc", *at).with_noise(0.1, 0.25).unwrap();
        let l = |r: bool| {
            observe(&s, &spec, &Reading::Presence(r)).unwrap().branches.into_iter().map(|(w, _)| w).sum::<Prob>()
        };
        prop_assert!((l(true) + l(false)).is_one());
        if let PresenceLikelihood::Value(p) = presence_likelihood(&s, &spec, true) {
            prop_assert_eq!(p, l(true));
        }
    }

    #[test]
    fn observation_commutes_with_grounding(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 10_000);
        let spec = random_sensor(&mut rng);
        let reading = reading_for(&spec, &mut rng);
        let Ok(obs) = observe(&s, &spec, &reading) else { return Ok(()) };
        let mut expected = Mix::new();
        for (g, p) in ground_of(&s) {
            let l = ground_likelihood(g.entities(), &spec, &reading).unwrap();
            if !l.is_zero() {
                expected.insert(g, p * l);
            }
        }
        prop_assert_eq!(ground_mix(obs.branches.iter().map(|(w, s)| (w, s))), expected);
    }

    #[test]
    fn noise_free_identify_never_adds_ground_states(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 10_000);
        let at = LOCATIONS.choose(&mut rng).unwrap();
        let spec = SensorSpec::identify("loc", *at, "ID");
        let reading = reading_for(&spec, &mut rng);
        let Ok(obs) = observe(&s, &spec, &reading) else { return Ok(()) };
        let before = ground_of(&s);
        let after = ground_mix(obs.branches.iter().map(|(w, s)| (w, s)));
        prop_assert!(after.len() <= before.len());
        prop_assert!(after.keys().all(|g| before.contains_key(g)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_models_filter_like_the_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, 200);
        let schemas = random_schemas(&mut rng, 2);
        let sensors: BTreeMap<String, SensorSpec> =
            (0..2).map(|i| (format!("z{i}"), random_sensor(&mut rng))).collect();
        let sc = Scenario {
            name: "random".into(),
            slots: BTreeSet::new(),
            locations: LOCATIONS.iter().map(|l| Value::new(*l)).collect(),
            edges: Vec::new(),
            initial: LiftedBeliefState::point(s.clone()),
            schemas: schemas.clone(),
            sensors: sensors.clone(),
            queries: Vec::new(),
            horizon: 3,
        };
        let trace = sample_trace(&sc, seed, 3).unwrap();
        let config = FilterConfig { guard: 2_000, ..FilterConfig::default() };
        let f = Filter::new(schemas.clone(), sensors.clone(), config);
        let mut gf = GroundFilter::new(ground_of(&s), schemas, sensors, 20_000);
        let mut b = sc.initial.clone();
        // models whose state space outgrows the guards are cut short
        for step in &trace.steps {
            let (Ok((u, _)), Ok(())) = (f.update(&b, &step.observation), gf.update(&step.observation)) else {
                return Ok(());
            };
            prop_assert_eq!(u.ground(DEFAULT_GUARD).unwrap(), gf.belief());
            prop_assert!(u.len() <= gf.len());
            if u.hypotheses().keys().any(|s| s.entity_count() > 8) {
                return Ok(());
            }
            let (Ok((p, _)), Ok(())) = (f.predict(&u), gf.predict()) else {
                return Ok(());
            };
            prop_assert_eq!(p.ground(DEFAULT_GUARD).unwrap(), gf.belief());
            prop_assert!(p.len() <= gf.len());
            b = p;
        }
    }
}
