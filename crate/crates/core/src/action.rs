//! Action schemas, applicability, and maximal parallel compound actions.
//!
//! A schema consumes a tuple of participant entities, each filtered by a
//! conjunction of slot constraints, and rewrites them with a fixed list of
//! effect primitives. In every step a maximal multiset of schema instances
//! fires simultaneously. On a lifted state an instance is described by the
//! tuple of groups its participants are drawn from, so a compound action is
//! a count per such instance type.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::prob::{self, Prob};
use crate::state::{merge, split_on_slot_value, Entity, Group, LabelId, LiftedState, RawState};
use crate::value::{Slot, Value};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Eq(Value),
    Neq(Value),
    In(BTreeSet<Value>),
}

/// A test on one slot of a participant. A participant lacking the slot
/// never satisfies the constraint.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Constraint {
    pub slot: Slot,
    pub op: Op,
}

impl Constraint {
    pub fn eq(slot: impl Into<Slot>, v: impl Into<Value>) -> Self {
        Constraint { slot: slot.into(), op: Op::Eq(v.into()) }
    }

    pub fn neq(slot: impl Into<Slot>, v: impl Into<Value>) -> Self {
        Constraint { slot: slot.into(), op: Op::Neq(v.into()) }
    }

    pub fn one_of<I, V>(slot: impl Into<Slot>, values: I) -> Self
    where
        I: IntoIterator<Item = V>,
        V: Into<Value>,
    {
        Constraint {
            slot: slot.into(),
            op: Op::In(values.into_iter().map(Into::into).collect()),
        }
    }

    pub fn accepts(&self, v: &Value) -> bool {
        match &self.op {
            Op::Eq(x) => v == x,
            Op::Neq(x) => v != x,
            Op::In(xs) => xs.contains(v),
        }
    }
}

/// Where an effect takes a value from. Copies read the participant as it
/// was before the step.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Value(Value),
    Copy { participant: usize, slot: Slot },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Effect {
    /// Rebinds or creates a slot.
    Set { participant: usize, slot: Slot, source: Source },
    Remove { participant: usize, slot: Slot },
    Consume(usize),
    Produce(Vec<(Slot, Source)>),
}

/// A named rewriting rule with a positive rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSchema {
    name: String,
    participants: Vec<Vec<Constraint>>,
    effects: Vec<Effect>,
    rate: f64,
    exact_rate: Prob,
}

impl ActionSchema {
    pub fn new(
        name: impl Into<String>,
        participants: Vec<Vec<Constraint>>,
        effects: Vec<Effect>,
        rate: f64,
    ) -> Result<Self> {
        let name = name.into();
        let bad = |reason: String| Error::InvalidEffect { schema: name.clone(), reason };
        if participants.is_empty() {
            return Err(bad("a schema needs at least one participant".into()));
        }
        let exact_rate = prob::from_f64(rate)
            .filter(|r| *r > prob::zero())
            .ok_or_else(|| bad(format!("rate {rate} is not a positive number")))?;
        let arity = participants.len();
        let check = |p: usize| {
            if p < arity {
                Ok(())
            } else {
                Err(bad(format!("participant {p} out of range for arity {arity}")))
            }
        };
        let mut consumed = BTreeSet::new();
        for e in &effects {
            match e {
                Effect::Consume(p) => {
                    check(*p)?;
                    if !consumed.insert(*p) {
                        return Err(bad(format!("participant {p} consumed twice")));
                    }
                }
                Effect::Produce(slots) => {
                    if slots.is_empty() {
                        return Err(bad("produced entity has no slots".into()));
                    }
                    let names: BTreeSet<&Slot> = slots.iter().map(|(s, _)| s).collect();
                    if names.len() != slots.len() {
                        return Err(bad("produced entity binds a slot twice".into()));
                    }
                    for (_, src) in slots {
                        if let Source::Copy { participant, .. } = src {
                            check(*participant)?;
                        }
                    }
                }
                Effect::Set { participant, source, .. } => {
                    check(*participant)?;
                    if let Source::Copy { participant, .. } = source {
                        check(*participant)?;
                    }
                }
                Effect::Remove { participant, .. } => check(*participant)?,
            }
        }
        for e in &effects {
            if let Effect::Set { participant, .. } | Effect::Remove { participant, .. } = e {
                if consumed.contains(participant) {
                    return Err(bad(format!("participant {participant} is modified and consumed")));
                }
            }
        }
        Ok(ActionSchema { name, participants, effects, rate, exact_rate })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn participants(&self) -> &[Vec<Constraint>] {
        &self.participants
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn exact_rate(&self) -> &Prob {
        &self.exact_rate
    }

    pub fn arity(&self) -> usize {
        self.participants.len()
    }

    /// Every slot this schema tests or writes.
    pub fn slots(&self) -> BTreeSet<&Slot> {
        let mut out: BTreeSet<&Slot> = self.participants.iter().flatten().map(|c| &c.slot).collect();
        for e in &self.effects {
            match e {
                Effect::Set { slot, source, .. } => {
                    out.insert(slot);
                    if let Source::Copy { slot, .. } = source {
                        out.insert(slot);
                    }
                }
                Effect::Remove { slot, .. } => {
                    out.insert(slot);
                }
                Effect::Consume(_) => {}
                Effect::Produce(slots) => {
                    for (s, src) in slots {
                        out.insert(s);
                        if let Source::Copy { slot, .. } = src {
                            out.insert(slot);
                        }
                    }
                }
            }
        }
        out
    }
}

/// One schema applied to participants drawn from the given groups.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Instance {
    pub schema: usize,
    pub groups: Vec<usize>,
}

/// Multiset of instances fired together, as (instance, multiplicity > 0).
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompoundAction {
    pub instances: Vec<(Instance, u32)>,
}

impl CompoundAction {
    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Applicability {
    /// Group tuples whose entities satisfy every participant constraint.
    Applicable(Vec<Vec<usize>>),
    Inapplicable,
    /// The outcome depends on an uncertain label; split on this first.
    Indeterminate { slot: Slot, value: Value },
}

enum Truth {
    True,
    False,
    Split(Slot, Value),
}

fn constraint_truth(c: &Constraint, e: &Entity, s: &LiftedState) -> Truth {
    let Some(l) = e.label(&c.slot) else { return Truth::False };
    let support = s.distribution(l).support();
    let (yes, no): (Vec<&Value>, Vec<&Value>) = support.into_iter().partition(|v| c.accepts(v));
    if no.is_empty() {
        Truth::True
    } else if yes.is_empty() {
        Truth::False
    } else {
        let pick = if yes.len() <= no.len() { yes[0] } else { no[0] };
        Truth::Split(c.slot.clone(), pick.clone())
    }
}

fn entity_truth(cs: &[Constraint], e: &Entity, s: &LiftedState) -> Truth {
    let mut pending = None;
    for c in cs {
        match constraint_truth(c, e, s) {
            Truth::False => return Truth::False,
            Truth::Split(slot, v) if pending.is_none() => pending = Some((slot, v)),
            _ => {}
        }
    }
    match pending {
        Some((slot, v)) => Truth::Split(slot, v),
        None => Truth::True,
    }
}

/// Decides whether `a` can fire in `s`, and on which group tuples.
pub fn applicability(s: &LiftedState, a: &ActionSchema) -> Applicability {
    let mut per_position = Vec::with_capacity(a.arity());
    for cs in &a.participants {
        let mut ok = Vec::new();
        for (gi, g) in s.groups().iter().enumerate() {
            match entity_truth(cs, &g.entity, s) {
                Truth::True => ok.push(gi),
                Truth::False => {}
                Truth::Split(slot, value) => return Applicability::Indeterminate { slot, value },
            }
        }
        per_position.push(ok);
    }
    let mut tuples = Vec::new();
    let mut cur = Vec::with_capacity(a.arity());
    group_tuples(s, &per_position, &mut cur, &mut tuples);
    for t in &tuples {
        if let Some((slot, value)) = uncertain_copy(s, a, t) {
            return Applicability::Indeterminate { slot, value };
        }
    }
    if tuples.is_empty() {
        Applicability::Inapplicable
    } else {
        Applicability::Applicable(tuples)
    }
}

fn group_tuples(s: &LiftedState, per: &[Vec<usize>], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == per.len() {
        out.push(cur.clone());
        return;
    }
    for &g in &per[cur.len()] {
        let used = cur.iter().filter(|&&x| x == g).count() as u32 + 1;
        if used <= s.groups()[g].count {
            cur.push(g);
            group_tuples(s, per, cur, out);
            cur.pop();
        }
    }
}

/// A copy effect reading an uncertain label must have that value decided,
/// otherwise the copy would become an independent draw.
fn uncertain_copy(s: &LiftedState, a: &ActionSchema, tuple: &[usize]) -> Option<(Slot, Value)> {
    let sources = a.effects.iter().flat_map(|e| match e {
        Effect::Set { source, .. } => vec![source],
        Effect::Produce(slots) => slots.iter().map(|(_, src)| src).collect(),
        _ => vec![],
    });
    for src in sources {
        if let Source::Copy { participant, slot } = src {
            let e = &s.groups()[tuple[*participant]].entity;
            if let Some(l) = e.label(slot) {
                let d = s.distribution(l);
                if !d.is_dirac() {
                    return Some((slot.clone(), d.support()[0].clone()));
                }
            }
        }
    }
    None
}

fn first_indeterminate(s: &LiftedState, schemas: &[ActionSchema]) -> Option<(Slot, Value)> {
    schemas.iter().find_map(|a| match applicability(s, a) {
        Applicability::Indeterminate { slot, value } => Some((slot, value)),
        _ => None,
    })
}

/// Splits `s` until every schema's applicability is determinate. Returns
/// the weighted pieces and the number of splits performed.
pub fn resolve(s: &LiftedState, schemas: &[ActionSchema]) -> Result<(Vec<(Prob, LiftedState)>, usize)> {
    let mut done = Vec::new();
    let mut work = vec![(prob::one(), s.clone())];
    let mut splits = 0;
    while let Some((w, st)) = work.pop() {
        match first_indeterminate(&st, schemas) {
            None => done.push((w, st)),
            Some((slot, v)) => {
                splits += 1;
                for (q, b) in split_on_slot_value(&st, &slot, &v)? {
                    work.push((&w * q, b));
                }
            }
        }
    }
    Ok((merge(done), splits))
}

/// An instance type with its per-group consumption.
struct Kind {
    instance: Instance,
    usage: Vec<(usize, u32)>,
    rate: Prob,
}

fn kinds(s: &LiftedState, schemas: &[ActionSchema]) -> Result<Vec<Kind>> {
    let mut out = Vec::new();
    for (ai, a) in schemas.iter().enumerate() {
        match applicability(s, a) {
            Applicability::Applicable(tuples) => {
                for t in tuples {
                    let mut usage: BTreeMap<usize, u32> = BTreeMap::new();
                    for &g in &t {
                        *usage.entry(g).or_insert(0) += 1;
                    }
                    out.push(Kind {
                        instance: Instance { schema: ai, groups: t },
                        usage: usage.into_iter().collect(),
                        rate: a.exact_rate.clone(),
                    });
                }
            }
            Applicability::Inapplicable => {}
            Applicability::Indeterminate { slot, value } => {
                return Err(Error::Indeterminate { slot, value })
            }
        }
    }
    Ok(out)
}

/// All maximal multiplicity vectors over `kinds` with their unnormalized
/// weights: rate products times the number of ground instance sets each
/// vector stands for.
fn maximal_vectors(kinds: &[&Kind], counts: &[u32]) -> Vec<(Vec<u32>, Prob)> {
    let mut residual = counts.to_vec();
    let mut n = vec![0u32; kinds.len()];
    let mut out = Vec::new();
    maximal_rec(kinds, counts, 0, &mut residual, &mut n, &mut out);
    out
}

fn fits(k: &Kind, residual: &[u32]) -> bool {
    k.usage.iter().all(|&(g, u)| residual[g] >= u)
}

fn maximal_rec(
    kinds: &[&Kind],
    counts: &[u32],
    i: usize,
    residual: &mut Vec<u32>,
    n: &mut Vec<u32>,
    out: &mut Vec<(Vec<u32>, Prob)>,
) {
    if i == kinds.len() {
        if kinds.iter().any(|k| fits(k, residual)) {
            return;
        }
        let mut w = prob::one();
        let mut touched = BTreeSet::new();
        for (k, &m) in kinds.iter().zip(n.iter()) {
            w *= prob::pow(&k.rate, m);
            w /= prob::from_int(prob::factorial(m as u64));
            touched.extend(k.usage.iter().map(|&(g, _)| g));
        }
        for g in touched {
            w *= prob::from_int(prob::falling(counts[g] as u64, (counts[g] - residual[g]) as u64));
        }
        out.push((n.clone(), w));
        return;
    }
    let k = kinds[i];
    let mut m = 0;
    loop {
        maximal_rec(kinds, counts, i + 1, residual, n, out);
        if !fits(k, residual) {
            break;
        }
        for &(g, u) in &k.usage {
            residual[g] -= u;
        }
        m += 1;
        n[i] = m;
    }
    for &(g, u) in &k.usage {
        residual[g] += u * m;
    }
    n[i] = 0;
}

/// All maximal compound actions of a determinate state, with normalized
/// weights. A state where nothing applies has the single empty compound.
pub fn enumerate_maximal_compounds(
    s: &LiftedState,
    schemas: &[ActionSchema],
) -> Result<Vec<(CompoundAction, Prob)>> {
    let ks = kinds(s, schemas)?;
    if ks.is_empty() {
        return Ok(vec![(CompoundAction::default(), prob::one())]);
    }
    let counts: Vec<u32> = s.groups().iter().map(|g| g.count).collect();
    let refs: Vec<&Kind> = ks.iter().collect();
    let vectors = maximal_vectors(&refs, &counts);
    let total: Prob = vectors.iter().map(|(_, w)| w.clone()).sum();
    Ok(vectors
        .into_iter()
        .map(|(n, w)| {
            let instances = ks
                .iter()
                .zip(n)
                .filter(|(_, m)| *m > 0)
                .map(|(k, m)| (k.instance.clone(), m))
                .collect();
            (CompoundAction { instances }, w / &total)
        })
        .collect())
}

/// A label reference in an entity built outside a state: an existing label
/// of the source state or a fresh point mass.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum LabelRef {
    Existing(LabelId),
    Const(Value),
    /// A fresh categorical label, one independent draw per entity.
    Cat(BTreeMap<Value, Prob>),
}

type Partial = Vec<(Slot, LabelRef)>;

fn set_slot(e: &mut Partial, slot: &Slot, l: LabelRef) {
    match e.binary_search_by(|(s, _)| s.cmp(slot)) {
        Ok(i) => e[i].1 = l,
        Err(i) => e.insert(i, (slot.clone(), l)),
    }
}

fn partial_of(e: &Entity) -> Partial {
    e.slots().iter().map(|(s, l)| (s.clone(), LabelRef::Existing(*l))).collect()
}

/// The entities produced by one firing of `a` on entities of `tuple`.
fn instance_outcome(s: &LiftedState, a: &ActionSchema, tuple: &[usize]) -> Result<Vec<Partial>> {
    let bad = |reason: String| Error::InvalidEffect { schema: a.name.clone(), reason };
    let source = |src: &Source| -> Result<LabelRef> {
        match src {
            Source::Value(v) => Ok(LabelRef::Const(v.clone())),
            Source::Copy { participant, slot } => {
                let e = &s.groups()[tuple[*participant]].entity;
                let l = e
                    .label(slot)
                    .ok_or_else(|| bad(format!("participant {participant} has no slot `{slot}` to copy")))?;
                match s.distribution(l) {
                    Distribution::Dirac(v) => Ok(LabelRef::Const(v.clone())),
                    _ => Err(bad(format!("copy of undecided slot `{slot}`"))),
                }
            }
        }
    };
    let mut parts: Vec<Option<Partial>> = tuple
        .iter()
        .map(|&g| Some(partial_of(&s.groups()[g].entity)))
        .collect();
    let mut produced = Vec::new();
    for e in &a.effects {
        match e {
            Effect::Set { participant, slot, source: src } => {
                let l = source(src)?;
                set_slot(parts[*participant].as_mut().unwrap(), slot, l);
            }
            Effect::Remove { participant, slot } => {
                let p = parts[*participant].as_mut().unwrap();
                let i = p
                    .binary_search_by(|(s, _)| s.cmp(slot))
                    .map_err(|_| bad(format!("participant {participant} has no slot `{slot}` to remove")))?;
                p.remove(i);
            }
            Effect::Consume(p) => parts[*p] = None,
            Effect::Produce(slots) => {
                let mut out = Partial::new();
                for (slot, src) in slots {
                    set_slot(&mut out, slot, source(src)?);
                }
                produced.push(out);
            }
        }
    }
    let mut out: Vec<Partial> = parts.into_iter().flatten().collect();
    if out.iter().any(|p| p.is_empty()) {
        return Err(bad("an entity would be left without slots".into()));
    }
    out.extend(produced);
    Ok(out)
}

/// Builds a state from the labels of `s` and a list of partial groups.
fn assemble(s: &LiftedState, groups: impl IntoIterator<Item = (Partial, u32)>) -> LiftedState {
    let mut raw = RawState {
        groups: Vec::new(),
        labels: s.labels().to_vec(),
    };
    let mut consts: BTreeMap<Value, LabelId> = BTreeMap::new();
    for (p, count) in groups {
        if count == 0 {
            continue;
        }
        let slots = p
            .into_iter()
            .map(|(slot, l)| {
                let id = match l {
                    LabelRef::Existing(id) => id,
                    LabelRef::Const(v) => *consts
                        .entry(v.clone())
                        .or_insert_with(|| raw.add_label(Distribution::Dirac(v))),
                    LabelRef::Cat(m) => raw.add_label(Distribution::Categorical(m)),
                };
                (slot, id)
            })
            .collect();
        raw.groups.push(Group { entity: Entity::new(slots), count });
    }
    raw.canonicalize()
}

/// Applies a compound action enumerated from `s`.
pub fn apply_compound(s: &LiftedState, schemas: &[ActionSchema], c: &CompoundAction) -> Result<LiftedState> {
    let mut residual: Vec<u32> = s.groups().iter().map(|g| g.count).collect();
    let mut groups = Vec::new();
    for (inst, n) in &c.instances {
        for &g in &inst.groups {
            residual[g] = residual[g].checked_sub(*n).ok_or_else(|| Error::InvalidEffect {
                schema: schemas[inst.schema].name.clone(),
                reason: "compound consumes more entities than the group holds".into(),
            })?;
        }
        for p in instance_outcome(s, &schemas[inst.schema], &inst.groups)? {
            groups.push((p, *n));
        }
    }
    for (g, r) in s.groups().iter().zip(residual) {
        groups.push((partial_of(&g.entity), r));
    }
    Ok(assemble(s, groups))
}

/// Weighted successor states of one hypothesis, and the splits needed to
/// make the schemas' applicability determinate.
#[derive(Clone, Debug)]
pub struct Successors {
    pub states: Vec<(Prob, LiftedState)>,
    pub splits: usize,
}

/// The one-step transition distribution of `s`.
///
/// Instance types that share no group fire independently, so the maximal
/// compounds factor over connected components of instance types; each
/// component is enumerated and normalized on its own and the outcomes are
/// combined, merging equal partial outcomes as early as possible.
pub fn successors(s: &LiftedState, schemas: &[ActionSchema]) -> Result<Successors> {
    let (pieces, splits) = resolve(s, schemas)?;
    let mut out = Vec::new();
    for (w, st) in pieces {
        for (q, t) in step_determinate(&st, schemas)? {
            out.push((&w * q, t));
        }
    }
    Ok(Successors { states: merge(out), splits })
}

fn step_determinate(s: &LiftedState, schemas: &[ActionSchema]) -> Result<Vec<(Prob, LiftedState)>> {
    let ks = kinds(s, schemas)?;
    if ks.is_empty() {
        return Ok(vec![(prob::one(), s.clone())]);
    }
    let counts: Vec<u32> = s.groups().iter().map(|g| g.count).collect();

    // union-find over groups linked by instance types
    let mut parent: Vec<usize> = (0..counts.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for k in &ks {
        let first = find(&mut parent, k.usage[0].0);
        for &(g, _) in &k.usage[1..] {
            let r = find(&mut parent, g);
            parent[r] = first;
        }
    }
    let mut components: BTreeMap<usize, Vec<&Kind>> = BTreeMap::new();
    for k in &ks {
        let r = find(&mut parent, k.usage[0].0);
        components.entry(r).or_default().push(k);
    }
    let mut touched = vec![false; counts.len()];
    for k in &ks {
        for &(g, _) in &k.usage {
            touched[g] = true;
        }
    }
    let base: Vec<(Partial, u32)> = s
        .groups()
        .iter()
        .zip(&touched)
        .filter(|(_, t)| !**t)
        .map(|(g, _)| (partial_of(&g.entity), g.count))
        .collect();

    let mut factors: Vec<Vec<(Vec<(Partial, u32)>, Prob)>> = Vec::new();
    for kinds in components.values() {
        if let Some(f) = independent_moves(s, schemas, kinds)? {
            factors.push(vec![(f, prob::one())]);
            continue;
        }
        let mut outcome_cache: BTreeMap<usize, Vec<Partial>> = BTreeMap::new();
        let mut acc: BTreeMap<Vec<(Partial, u32)>, Prob> = BTreeMap::new();
        let mut total = prob::zero();
        let groups: BTreeSet<usize> = kinds.iter().flat_map(|k| k.usage.iter().map(|&(g, _)| g)).collect();
        for (n, w) in maximal_vectors(kinds, &counts) {
            let mut residual = counts.clone();
            let mut parts: BTreeMap<Partial, u32> = BTreeMap::new();
            for (ki, (k, &m)) in kinds.iter().zip(&n).enumerate() {
                if m == 0 {
                    continue;
                }
                for &(g, u) in &k.usage {
                    residual[g] -= u * m;
                }
                if !outcome_cache.contains_key(&ki) {
                    let o = instance_outcome(s, &schemas[k.instance.schema], &k.instance.groups)?;
                    outcome_cache.insert(ki, o);
                }
                for p in &outcome_cache[&ki] {
                    *parts.entry(p.clone()).or_insert(0) += m;
                }
            }
            for &g in &groups {
                if residual[g] > 0 {
                    *parts.entry(partial_of(&s.groups()[g].entity)).or_insert(0) += residual[g];
                }
            }
            total += &w;
            *acc.entry(parts.into_iter().collect()).or_insert_with(prob::zero) += w;
        }
        factors.push(acc.into_iter().map(|(p, w)| (p, w / &total)).collect());
    }

    let mut out: BTreeMap<LiftedState, Prob> = BTreeMap::new();
    let mut chosen: Vec<usize> = vec![0; factors.len()];
    loop {
        let mut w = prob::one();
        let mut groups = base.clone();
        for (f, &i) in factors.iter().zip(&chosen) {
            w *= &f[i].1;
            groups.extend(f[i].0.iter().cloned());
        }
        if !w.is_zero() {
            *out.entry(assemble(s, groups)).or_insert_with(prob::zero) += w;
        }
        let mut k = 0;
        while k < factors.len() {
            chosen[k] += 1;
            if chosen[k] < factors[k].len() {
                break;
            }
            chosen[k] = 0;
            k += 1;
        }
        if k == factors.len() {
            break;
        }
    }
    Ok(out.into_iter().map(|(s, w)| (w, s)).collect())
}

/// Outcome of a component whose instance types are all unary on a single
/// group and whose outcomes differ in at most one slot, bound to decided
/// values.
///
/// Every entity of the group then picks a schema independently with
/// probability proportional to its rate, so the group keeps its count and
/// the rebound slot gets a categorical label. This avoids enumerating the
/// multinomial split of the group over its possible outcomes.
fn independent_moves(s: &LiftedState, schemas: &[ActionSchema], kinds: &[&Kind]) -> Result<Option<Vec<(Partial, u32)>>> {
    let g = kinds[0].usage[0].0;
    if kinds.iter().any(|k| k.usage != [(g, 1)]) {
        return Ok(None);
    }
    let base = partial_of(&s.groups()[g].entity);
    let mut outcomes = Vec::with_capacity(kinds.len());
    for k in kinds {
        let mut o = instance_outcome(s, &schemas[k.instance.schema], &k.instance.groups)?;
        if o.len() != 1 {
            return Ok(None);
        }
        let o = o.pop().expect("one outcome");
        if o.len() != base.len() || o.iter().zip(&base).any(|((a, _), (b, _))| a != b) {
            return Ok(None);
        }
        outcomes.push((o, &k.rate));
    }
    let varying: Vec<usize> = (0..base.len())
        .filter(|&i| outcomes.iter().any(|(o, _)| o[i].1 != outcomes[0].0[i].1))
        .collect();
    let slot = match varying[..] {
        [] => return Ok(Some(vec![(outcomes.swap_remove(0).0, s.groups()[g].count)])),
        [slot] => slot,
        _ => return Ok(None),
    };
    let total: Prob = outcomes.iter().map(|(_, r)| (*r).clone()).sum();
    let mut cat: BTreeMap<Value, Prob> = BTreeMap::new();
    for (o, r) in &outcomes {
        let v = match &o[slot].1 {
            LabelRef::Const(v) => v.clone(),
            LabelRef::Existing(l) => match s.distribution(*l) {
                Distribution::Dirac(v) => v.clone(),
                _ => return Ok(None),
            },
            LabelRef::Cat(_) => return Ok(None),
        };
        *cat.entry(v).or_insert_with(prob::zero) += *r / &total;
    }
    let mut out = outcomes.swap_remove(0).0;
    out[slot].1 = if cat.len() == 1 {
        LabelRef::Const(cat.into_keys().next().expect("one value"))
    } else {
        LabelRef::Cat(cat)
    };
    Ok(Some(vec![(out, s.groups()[g].count)]))
}

/// Reference transition: brute-force enumeration of whole compounds.
pub fn successors_by_compounds(s: &LiftedState, schemas: &[ActionSchema]) -> Result<Vec<(Prob, LiftedState)>> {
    let (pieces, _) = resolve(s, schemas)?;
    let mut out = Vec::new();
    for (w, st) in pieces {
        for (c, q) in enumerate_maximal_compounds(&st, schemas)? {
            out.push((&w * q, apply_compound(&st, schemas, &c)?));
        }
    }
    Ok(merge(out))
}
