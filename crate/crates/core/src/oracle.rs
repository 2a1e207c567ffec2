//! Grounded forward filter.
//!
//! Works on explicit ground states where every entity is distinct, with its
//! own instance enumeration, effect application and likelihoods. It is the
//! reference the lifted filter is checked against, and the baseline whose
//! state count explodes on larger scenarios.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::Zero;

use crate::action::{ActionSchema, Constraint, Effect, Source};
use crate::error::{Error, Result};
use crate::filter::{LiftedBeliefState, Query};
use crate::observation::{Observation, Reading, SensorKind, SensorSpec};
use crate::prob::{self, Prob};
use crate::state::{GroundEntity, GroundState};
use crate::value::Value;

pub type GroundBelief = BTreeMap<GroundState, Prob>;

fn satisfies(e: &GroundEntity, cs: &[Constraint]) -> bool {
    cs.iter().all(|c| e.get(&c.slot).is_some_and(|v| c.accepts(v)))
}

/// One ground instance: a schema and an ordered tuple of entity indices.
#[derive(Clone, Debug)]
struct GroundInstance {
    schema: usize,
    entities: Vec<usize>,
}

fn ground_instances(entities: &[GroundEntity], schemas: &[ActionSchema]) -> Vec<GroundInstance> {
    let mut out = Vec::new();
    for (si, a) in schemas.iter().enumerate() {
        let candidates: Vec<Vec<usize>> = a
            .participants()
            .iter()
            .map(|cs| (0..entities.len()).filter(|&i| satisfies(&entities[i], cs)).collect())
            .collect();
        let mut tuple = Vec::new();
        tuples(&candidates, &mut tuple, &mut |t| {
            out.push(GroundInstance { schema: si, entities: t.to_vec() })
        });
    }
    out
}

fn tuples(candidates: &[Vec<usize>], cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if cur.len() == candidates.len() {
        f(cur);
        return;
    }
    for &i in &candidates[cur.len()] {
        if !cur.contains(&i) {
            cur.push(i);
            tuples(candidates, cur, f);
            cur.pop();
        }
    }
}

fn fire(entities: &[GroundEntity], a: &ActionSchema, inst: &GroundInstance) -> Result<Vec<GroundEntity>> {
    let bad = |reason: String| Error::InvalidEffect { schema: a.name().to_string(), reason };
    let read = |src: &Source| -> Result<Value> {
        match src {
            Source::Value(v) => Ok(v.clone()),
            Source::Copy { participant, slot } => entities[inst.entities[*participant]]
                .get(slot)
                .cloned()
                .ok_or_else(|| bad(format!("participant {participant} has no slot `{slot}` to copy"))),
        }
    };
    let mut parts: Vec<Option<GroundEntity>> =
        inst.entities.iter().map(|&i| Some(entities[i].clone())).collect();
    let mut made = Vec::new();
    for e in a.effects() {
        match e {
            Effect::Set { participant, slot, source } => {
                let v = read(source)?;
                parts[*participant].as_mut().unwrap().0.insert(slot.clone(), v);
            }
            Effect::Remove { participant, slot } => {
                if parts[*participant].as_mut().unwrap().0.remove(slot).is_none() {
                    return Err(bad(format!("participant {participant} has no slot `{slot}` to remove")));
                }
            }
            Effect::Consume(p) => parts[*p] = None,
            Effect::Produce(slots) => {
                let mut m = BTreeMap::new();
                for (slot, src) in slots {
                    m.insert(slot.clone(), read(src)?);
                }
                made.push(GroundEntity(m));
            }
        }
    }
    let mut out: Vec<GroundEntity> = parts.into_iter().flatten().collect();
    if out.iter().any(|e| e.0.is_empty()) {
        return Err(bad("an entity would be left without slots".into()));
    }
    out.extend(made);
    Ok(out)
}

/// The transition distribution of one ground state, factored into
/// independent parts.
#[derive(Clone, Debug)]
pub struct GroundTransition {
    /// Entities no instance can touch.
    pub untouched: Vec<GroundEntity>,
    /// Per independent block of entities: its possible outcomes (sorted
    /// entity lists) with normalized probabilities.
    pub factors: Vec<Vec<(Vec<GroundEntity>, Prob)>>,
}

impl GroundTransition {
    /// Number of successor combinations before merging.
    pub fn combinations(&self) -> usize {
        self.factors.iter().map(Vec::len).fold(1usize, |a, b| a.saturating_mul(b))
    }
}

/// Enumerates the maximal sets of disjoint instances of `entities`.
/// Instances sharing no entity are independent, so the sets are formed per
/// connected block and weighted by the product of their rates.
pub fn ground_transition(entities: &[GroundEntity], schemas: &[ActionSchema]) -> Result<GroundTransition> {
    let instances = ground_instances(entities, schemas);
    let mut block: Vec<usize> = (0..entities.len()).collect();
    fn root(b: &mut [usize], mut x: usize) -> usize {
        while b[x] != x {
            b[x] = b[b[x]];
            x = b[x];
        }
        x
    }
    for inst in &instances {
        let r = root(&mut block, inst.entities[0]);
        for &e in &inst.entities[1..] {
            let q = root(&mut block, e);
            block[q] = r;
        }
    }
    let mut by_block: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, inst) in instances.iter().enumerate() {
        let r = root(&mut block, inst.entities[0]);
        by_block.entry(r).or_default().push(k);
    }
    let mut active = vec![false; entities.len()];
    for inst in &instances {
        for &e in &inst.entities {
            active[e] = true;
        }
    }
    let untouched = entities
        .iter()
        .zip(&active)
        .filter(|(_, a)| !**a)
        .map(|(e, _)| e.clone())
        .collect();

    let mut factors = Vec::new();
    for members in by_block.values() {
        let block_entities: BTreeSet<usize> =
            members.iter().flat_map(|&k| instances[k].entities.iter().copied()).collect();
        let mut outcomes: BTreeMap<Vec<GroundEntity>, Prob> = BTreeMap::new();
        let mut used = vec![false; entities.len()];
        let mut chosen = Vec::new();
        let mut err = None;
        maximal_sets(&instances, members, 0, &mut used, &mut chosen, &mut |chosen, used| {
            if err.is_some() {
                return;
            }
            let mut w = prob::one();
            let mut result: Vec<GroundEntity> = block_entities
                .iter()
                .filter(|&&e| !used[e])
                .map(|&e| entities[e].clone())
                .collect();
            for &k in chosen {
                let inst = &instances[k];
                w *= schemas[inst.schema].exact_rate();
                match fire(entities, &schemas[inst.schema], inst) {
                    Ok(es) => result.extend(es),
                    Err(e) => err = Some(e),
                }
            }
            result.sort();
            *outcomes.entry(result).or_insert_with(prob::zero) += w;
        });
        if let Some(e) = err {
            return Err(e);
        }
        let total: Prob = outcomes.values().sum();
        factors.push(outcomes.into_iter().map(|(o, w)| (o, w / &total)).collect());
    }
    Ok(GroundTransition { untouched, factors })
}

fn maximal_sets(
    instances: &[GroundInstance],
    members: &[usize],
    i: usize,
    used: &mut Vec<bool>,
    chosen: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize], &[bool]),
) {
    if i == members.len() {
        let extendable = members
            .iter()
            .any(|&k| instances[k].entities.iter().all(|&e| !used[e]));
        if !extendable {
            f(chosen, used);
        }
        return;
    }
    let k = members[i];
    let free = instances[k].entities.iter().all(|&e| !used[e]);
    if free {
        for &e in &instances[k].entities {
            used[e] = true;
        }
        chosen.push(k);
        maximal_sets(instances, members, i + 1, used, chosen, f);
        chosen.pop();
        for &e in &instances[k].entities {
            used[e] = false;
        }
    }
    maximal_sets(instances, members, i + 1, used, chosen, f);
}

/// Likelihood of a reading given a ground state.
pub fn ground_likelihood(entities: &[GroundEntity], spec: &SensorSpec, reading: &Reading) -> Result<Prob> {
    let fp = spec.exact_false_positive();
    let fn_ = spec.exact_false_negative();
    let at: Vec<&GroundEntity> = entities
        .iter()
        .filter(|e| e.get(&spec.watched_slot) == Some(&spec.watched_value))
        .collect();
    match (&spec.kind, reading) {
        (SensorKind::Presence, Reading::Presence(r)) => Ok(match (!at.is_empty(), *r) {
            (true, true) => prob::one() - fn_,
            (true, false) => fn_.clone(),
            (false, true) => fp.clone(),
            (false, false) => prob::one() - fp,
        }),
        (SensorKind::Identify { id_slot, universe }, Reading::Identify(ids)) => {
            let mut l = prob::one();
            let mut held = BTreeSet::new();
            for e in &at {
                match e.get(id_slot) {
                    Some(id) if ids.contains(id) => {
                        l *= prob::one() - fn_;
                        held.insert(id.clone());
                    }
                    Some(id) => {
                        l *= fn_;
                        held.insert(id.clone());
                    }
                    None => {}
                }
            }
            for r in ids {
                if !held.contains(r) {
                    l *= fp;
                }
            }
            if let Some(u) = universe {
                for x in u {
                    if !held.contains(x) && !ids.contains(x) {
                        l *= prob::one() - fp;
                    }
                }
            }
            Ok(l)
        }
        _ => Err(Error::Parse("reading does not match the sensor kind".into())),
    }
}

/// Distribution of the query slot of the unique selected entity.
pub fn ground_query(belief: &GroundBelief, q: &Query) -> Result<BTreeMap<Value, Prob>> {
    let mut out: BTreeMap<Value, Prob> = BTreeMap::new();
    for (g, w) in belief {
        let holders: Vec<&GroundEntity> = g
            .entities()
            .iter()
            .filter(|e| e.get(&q.selector_slot) == Some(&q.selector_value))
            .collect();
        if holders.len() > 1 {
            return Err(Error::SelectorAmbiguous {
                slot: q.selector_slot.clone(),
                value: q.selector_value.clone(),
            });
        }
        if let Some(v) = holders.first().and_then(|e| e.get(&q.query_slot)) {
            *out.entry(v.clone()).or_insert_with(prob::zero) += w;
        }
    }
    Ok(out)
}

/// Grounds every hypothesis of a lifted belief.
pub fn ground_initial(b: &LiftedBeliefState, guard: usize) -> Result<GroundBelief> {
    b.ground(guard)
}

#[derive(Default)]
struct Interner {
    entities: Vec<GroundEntity>,
    index: HashMap<GroundEntity, u32>,
}

impl Interner {
    fn id(&mut self, e: GroundEntity) -> u32 {
        if let Some(&i) = self.index.get(&e) {
            return i;
        }
        let i = self.entities.len() as u32;
        self.entities.push(e.clone());
        self.index.insert(e, i);
        i
    }
}

/// Distribution of the multiset union of one outcome per factor, added to
/// `next` with weight `w`. Factors are folded in one at a time and equal
/// partial multisets merged, so identical entities do not multiply the
/// work. Distinct partial results stay distinct once the remaining factors
/// are added, so the guard can be applied to every partial map.
fn expand_factors(
    factors: &[Vec<(Vec<u32>, Prob)>],
    base: Vec<u32>,
    w: Prob,
    next: &mut BTreeMap<Box<[u32]>, Prob>,
    guard: usize,
) -> Result<()> {
    let mut partial: BTreeMap<Vec<u32>, Prob> = BTreeMap::from([(base, w)]);
    for f in factors {
        let mut grown: BTreeMap<Vec<u32>, Prob> = BTreeMap::new();
        for (ids, p) in &partial {
            for (o, q) in f {
                let mut key = ids.clone();
                key.extend_from_slice(o);
                key.sort_unstable();
                *grown.entry(key).or_insert_with(prob::zero) += p * q;
            }
            if grown.len() > guard {
                return Err(Error::ExplosionGuard { count: grown.len(), limit: guard });
            }
        }
        partial = grown;
    }
    for (ids, p) in partial {
        *next.entry(ids.into_boxed_slice()).or_insert_with(prob::zero) += p;
    }
    if next.len() > guard {
        return Err(Error::ExplosionGuard { count: next.len(), limit: guard });
    }
    Ok(())
}

/// Grounded forward filter. Ground states are kept as sorted lists of
/// interned entity ids to bound memory near the guard.
pub struct GroundFilter {
    schemas: Vec<ActionSchema>,
    sensors: BTreeMap<String, SensorSpec>,
    guard: usize,
    interner: Interner,
    belief: BTreeMap<Box<[u32]>, Prob>,
}

impl GroundFilter {
    pub fn new(
        initial: GroundBelief,
        schemas: Vec<ActionSchema>,
        sensors: BTreeMap<String, SensorSpec>,
        guard: usize,
    ) -> Self {
        let mut interner = Interner::default();
        let mut belief = BTreeMap::new();
        for (g, w) in initial {
            let key = Self::key(&mut interner, g.into_entities());
            belief.insert(key, w);
        }
        GroundFilter { schemas, sensors, guard, interner, belief }
    }

    fn key(interner: &mut Interner, entities: Vec<GroundEntity>) -> Box<[u32]> {
        let mut ids: Vec<u32> = entities.into_iter().map(|e| interner.id(e)).collect();
        ids.sort_unstable();
        ids.into_boxed_slice()
    }

    fn entities(&self, key: &[u32]) -> Vec<GroundEntity> {
        key.iter().map(|&i| self.interner.entities[i as usize].clone()).collect()
    }

    /// Number of ground states with positive probability.
    pub fn len(&self) -> usize {
        self.belief.len()
    }

    pub fn is_empty(&self) -> bool {
        self.belief.is_empty()
    }

    pub fn belief(&self) -> GroundBelief {
        self.belief
            .iter()
            .map(|(k, w)| (GroundState::new(self.entities(k)), w.clone()))
            .collect()
    }

    pub fn update(&mut self, obs: &Observation) -> Result<()> {
        let mut specs = Vec::new();
        for (id, r) in &obs.readings {
            let spec = self
                .sensors
                .get(id)
                .ok_or_else(|| Error::validation(format!("observation sensor `{id}`"), "unknown sensor"))?;
            specs.push((spec, r));
        }
        let mut next = BTreeMap::new();
        let mut total = prob::zero();
        for (k, w) in &self.belief {
            let es = self.entities(k);
            let mut l = w.clone();
            for (spec, r) in &specs {
                l *= ground_likelihood(&es, spec, r)?;
                if l.is_zero() {
                    break;
                }
            }
            if !l.is_zero() {
                total += &l;
                next.insert(k.clone(), l);
            }
        }
        if total.is_zero() {
            return Err(Error::ImpossibleObservation);
        }
        for w in next.values_mut() {
            *w /= &total;
        }
        self.belief = next;
        Ok(())
    }

    pub fn predict(&mut self) -> Result<()> {
        let mut next: BTreeMap<Box<[u32]>, Prob> = BTreeMap::new();
        let keys: Vec<(Box<[u32]>, Prob)> = std::mem::take(&mut self.belief).into_iter().collect();
        for (k, w) in keys {
            let es = self.entities(&k);
            let tr = ground_transition(&es, &self.schemas)?;
            let base: Vec<u32> = tr.untouched.into_iter().map(|e| self.interner.id(e)).collect();
            let factors: Vec<Vec<(Vec<u32>, Prob)>> = tr
                .factors
                .into_iter()
                .map(|f| {
                    f.into_iter()
                        .map(|(o, p)| (o.into_iter().map(|e| self.interner.id(e)).collect(), p))
                        .collect()
                })
                .collect();
            expand_factors(&factors, base, w, &mut next, self.guard)?;
        }
        self.belief = next;
        Ok(())
    }

    pub fn query(&self, q: &Query) -> Result<BTreeMap<Value, Prob>> {
        let mut out: BTreeMap<Value, Prob> = BTreeMap::new();
        for (k, w) in &self.belief {
            let mut holders = k
                .iter()
                .map(|&i| &self.interner.entities[i as usize])
                .filter(|e| e.get(&q.selector_slot) == Some(&q.selector_value));
            let first = holders.next();
            if holders.next().is_some() {
                return Err(Error::SelectorAmbiguous {
                    slot: q.selector_slot.clone(),
                    value: q.selector_value.clone(),
                });
            }
            if let Some(v) = first.and_then(|e| e.get(&q.query_slot)) {
                *out.entry(v.clone()).or_insert_with(prob::zero) += w;
            }
        }
        Ok(out)
    }
}
