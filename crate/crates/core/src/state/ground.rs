use std::collections::BTreeMap;
use std::fmt;

use super::{Entity, Group, LiftedState, RawState};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::prob::{self, Prob};
use crate::value::{Slot, Value};

/// Default limit on the number of ground states enumerated.
pub const DEFAULT_GUARD: usize = 1_000_000;

/// A fully concrete entity.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct GroundEntity(pub BTreeMap<Slot, Value>);

impl GroundEntity {
    pub fn get(&self, slot: &Slot) -> Option<&Value> {
        self.0.get(slot)
    }
}

/// Multiset of ground entities, kept sorted.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct GroundState(Vec<GroundEntity>);

impl GroundState {
    pub fn new(mut entities: Vec<GroundEntity>) -> Self {
        entities.sort();
        GroundState(entities)
    }

    pub fn entities(&self) -> &[GroundEntity] {
        &self.0
    }

    pub fn into_entities(self) -> Vec<GroundEntity> {
        self.0
    }
}

impl fmt::Display for GroundState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str("⟨")?;
            for (j, (s, v)) in e.0.iter().enumerate() {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{s}:{v}")?;
            }
            f.write_str("⟩")?;
        }
        f.write_str("}")
    }
}

impl LiftedState {
    /// The lifted state with one Dirac-labelled entity per ground entity.
    pub fn from_ground(g: &GroundState) -> LiftedState {
        let mut raw = RawState::default();
        for e in g.entities() {
            let slots = e.0.iter().map(|(s, v)| (s.clone(), raw.add_label(Distribution::Dirac(v.clone())))).collect();
            raw.groups.push(Group { entity: Entity::new(slots), count: 1 });
        }
        raw.canonicalize()
    }
}

/// Replaces the hypotheses by the ground states they represent when those
/// are fewer. Hypotheses may overlap in ground support, so a belief that
/// has become nearly ground can hold more lifted states than ground ones.
/// Enumeration stops after `budget` times as many ground states as there
/// are hypotheses. Returns the number of hypotheses removed.
pub fn collapse_to_ground(map: &mut BTreeMap<LiftedState, Prob>, budget: usize) -> usize {
    let n = map.len();
    let mut left = n.saturating_mul(budget);
    let mut grounds: BTreeMap<GroundState, Prob> = BTreeMap::new();
    for (s, w) in map.iter() {
        let Ok(gs) = s.ground(left) else { return 0 };
        left -= gs.len();
        for (g, p) in gs {
            *grounds.entry(g).or_insert_with(prob::zero) += w * p;
        }
    }
    if grounds.len() >= n {
        return 0;
    }
    *map = grounds.iter().map(|(g, p)| (LiftedState::from_ground(g), p.clone())).collect();
    n - map.len()
}

impl LiftedState {
    /// All ground states represented by this lifted state, with their
    /// probabilities.
    ///
    /// Entities of one group are exchangeable, so each group's members are
    /// drawn in non-decreasing order and the probability of the sorted
    /// sequence is scaled by the number of distinct orderings.
    pub fn ground(&self, guard: usize) -> Result<Vec<(GroundState, Prob)>> {
        let urns = self
            .labels
            .iter()
            .map(|d| match d {
                Distribution::Urn(m) => {
                    let total = m.values().map(|&c| c as u64).sum();
                    Some((m.clone(), total))
                }
                _ => None,
            })
            .collect();
        let mut g = Grounder {
            state: self,
            urns,
            entities: Vec::new(),
            out: BTreeMap::new(),
            leaves: 0,
            guard,
        };
        g.group(0, prob::one())?;
        Ok(g.out.into_iter().collect())
    }
}

struct Grounder<'a> {
    state: &'a LiftedState,
    urns: Vec<Option<(BTreeMap<Value, u32>, u64)>>,
    entities: Vec<GroundEntity>,
    out: BTreeMap<GroundState, Prob>,
    leaves: usize,
    guard: usize,
}

impl Grounder<'_> {
    fn group(&mut self, gi: usize, p: Prob) -> Result<()> {
        if gi == self.state.groups.len() {
            self.leaves += 1;
            if self.leaves > self.guard {
                return Err(Error::ExplosionGuard {
                    count: self.leaves,
                    limit: self.guard,
                });
            }
            let gs = GroundState::new(self.entities.clone());
            *self.out.entry(gs).or_insert_with(prob::zero) += p;
            return Ok(());
        }
        self.member(gi, 0, p)
    }

    fn member(&mut self, gi: usize, j: u32, p: Prob) -> Result<()> {
        let count = self.state.groups[gi].count;
        if j == count {
            let start = self.entities.len() - count as usize;
            let members = &self.entities[start..];
            let mut orderings = crate::prob::factorial(count as u64);
            let mut run = 1u64;
            for w in members.windows(2) {
                if w[0] == w[1] {
                    run += 1;
                } else {
                    orderings /= crate::prob::factorial(run);
                    run = 1;
                }
            }
            orderings /= crate::prob::factorial(run);
            let q = p * prob::from_int(orderings);
            return self.group(gi + 1, q);
        }
        let prev = if j > 0 { self.entities.last().cloned() } else { None };
        let mut tuple = Vec::with_capacity(self.state.groups[gi].entity.slots.len());
        self.slot(gi, j, 0, &mut tuple, prev.as_ref(), true, p)
    }

    #[allow(clippy::too_many_arguments)]
    fn slot(
        &mut self,
        gi: usize,
        j: u32,
        si: usize,
        tuple: &mut Vec<(Slot, Value)>,
        prev: Option<&GroundEntity>,
        tied: bool,
        p: Prob,
    ) -> Result<()> {
        let state = self.state;
        let slots = &state.groups[gi].entity.slots;
        if si == slots.len() {
            self.entities.push(GroundEntity(tuple.iter().cloned().collect()));
            let r = self.member(gi, j + 1, p);
            self.entities.pop();
            return r;
        }
        let (slot, label) = &slots[si];
        let floor = if tied { prev.map(|e| &e.0[slot]) } else { None };
        let choices: Vec<(Value, Prob)> = match &state.labels[*label as usize] {
            Distribution::Dirac(v) => vec![(v.clone(), prob::one())],
            Distribution::Categorical(m) => m.iter().map(|(v, q)| (v.clone(), q.clone())).collect(),
            Distribution::Urn(_) => {
                let (rem, total) = self.urns[*label as usize].as_ref().unwrap();
                rem.iter()
                    .filter(|(_, &c)| c > 0)
                    .map(|(v, &c)| (v.clone(), prob::ratio(c as u64, *total)))
                    .collect()
            }
        };
        for (v, q) in choices {
            if let Some(f) = floor {
                if v < *f {
                    continue;
                }
            }
            let still_tied = floor.is_some_and(|f| v == *f);
            let is_urn = self.urns[*label as usize].is_some();
            if is_urn {
                let (rem, total) = self.urns[*label as usize].as_mut().unwrap();
                *rem.get_mut(&v).unwrap() -= 1;
                *total -= 1;
            }
            tuple.push((slot.clone(), v.clone()));
            let r = self.slot(gi, j, si + 1, tuple, prev, still_tied, &p * q);
            tuple.pop();
            if is_urn {
                let (rem, total) = self.urns[*label as usize].as_mut().unwrap();
                *rem.get_mut(&v).unwrap() += 1;
                *total += 1;
            }
            r?;
        }
        Ok(())
    }
}
