//! Entities, state formulas, contexts and lifted states.
//!
//! A [`LiftedState`] pairs a multiset of entity structures (the state
//! formula) with a context that binds each distribution label to a
//! [`Distribution`]. Values of a lifted state are always in canonical form:
//! two states that differ only by label names or group order compare equal,
//! which is what lets the filter merge indistinguishable hypotheses.

mod ground;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::distribution::{Capacity, Distribution};
use crate::error::{Result, Violation};
use crate::value::{Slot, Value};

pub use ground::{collapse_to_ground, GroundEntity, GroundState, DEFAULT_GUARD};
pub use split::{marginal, merge, mix, split_on_slot_value, unsplit};

pub type LabelId = u32;

/// Slot-to-label map of one entity, sorted by slot name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Entity {
    slots: Vec<(Slot, LabelId)>,
}

impl Entity {
    pub fn new(mut slots: Vec<(Slot, LabelId)>) -> Self {
        slots.sort_by(|a, b| a.0.cmp(&b.0));
        Entity { slots }
    }

    pub fn slots(&self) -> &[(Slot, LabelId)] {
        &self.slots
    }

    pub fn label(&self, slot: &Slot) -> Option<LabelId> {
        self.slots
            .binary_search_by(|(s, _)| s.cmp(slot))
            .ok()
            .map(|i| self.slots[i].1)
    }

    /// Binds `slot` to `label`, inserting the slot if absent.
    pub fn set(&mut self, slot: Slot, label: LabelId) {
        match self.slots.binary_search_by(|(s, _)| s.cmp(&slot)) {
            Ok(i) => self.slots[i].1 = label,
            Err(i) => self.slots.insert(i, (slot, label)),
        }
    }

    pub fn remove(&mut self, slot: &Slot) -> Option<LabelId> {
        match self.slots.binary_search_by(|(s, _)| s.cmp(slot)) {
            Ok(i) => Some(self.slots.remove(i).1),
            Err(_) => None,
        }
    }

    fn relabel(&self, map: &[LabelId]) -> Entity {
        Entity {
            slots: self
                .slots
                .iter()
                .map(|(s, l)| (s.clone(), map[*l as usize]))
                .collect(),
        }
    }
}

/// An entity structure with its multiplicity in the state formula.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Group {
    pub entity: Entity,
    pub count: u32,
}

/// A state formula and context that have not been validated or
/// canonicalised. Label ids index into `labels`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawState {
    pub groups: Vec<Group>,
    pub labels: Vec<Distribution>,
}

/// Canonical, valid lifted state.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct LiftedState {
    groups: Vec<Group>,
    labels: Vec<Distribution>,
}

impl RawState {
    pub fn add_label(&mut self, d: Distribution) -> LabelId {
        self.labels.push(d);
        (self.labels.len() - 1) as LabelId
    }

    /// Draw demand per label: Σ multiplicity × referencing slots.
    fn demand(&self) -> BTreeMap<LabelId, u64> {
        let mut demand = BTreeMap::new();
        for g in &self.groups {
            for (_, l) in &g.entity.slots {
                *demand.entry(*l).or_insert(0u64) += g.count as u64;
            }
        }
        demand
    }

    /// Checks structural well-formedness and validity rules 1 and 2; does
    /// not complain about unreferenced labels.
    pub fn check(&self) -> std::result::Result<(), Violation> {
        for g in &self.groups {
            if g.count == 0 {
                return Err(Violation::ZeroMultiplicity);
            }
            if g.entity.slots.is_empty() {
                return Err(Violation::EmptyEntity);
            }
            for w in g.entity.slots.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Violation::DuplicateSlot(w[0].0.clone()));
                }
            }
            for (_, l) in &g.entity.slots {
                if *l as usize >= self.labels.len() {
                    return Err(Violation::DanglingLabel { label: *l });
                }
            }
        }
        for (label, demand) in self.demand() {
            let d = &self.labels[label as usize];
            if let Err(reason) = d.check() {
                return Err(Violation::MalformedDistribution { label, reason });
            }
            if let Capacity::Finite(capacity) = d.capacity() {
                if demand > capacity {
                    return Err(Violation::CapacityExceeded { label, capacity, demand });
                }
            }
        }
        Ok(())
    }

    /// Full validity report, including the no-unreferenced-label rule.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        self.check()?;
        let demand = self.demand();
        for l in 0..self.labels.len() as LabelId {
            if !demand.contains_key(&l) {
                return Err(Violation::UnreferencedLabel { label: l });
            }
        }
        Ok(())
    }

    /// Validates and brings the state into canonical form.
    pub fn into_lifted(self) -> Result<LiftedState> {
        self.check()?;
        Ok(self.canonicalize())
    }

    /// Deterministic normal form. Assumes [`RawState::check`] passes.
    ///
    /// Unreferenced labels are dropped, single-valued urns and categoricals
    /// become Dirac, Dirac and categorical labels with equal content are
    /// shared (their draws are independent, so sharing is unobservable), and
    /// urn labels are ordered by a renaming-invariant signature with ties
    /// resolved by exhaustive search for the smallest formula.
    pub fn canonicalize(self) -> LiftedState {
        let RawState { groups, labels } = self;
        let groups: Vec<Group> = groups.into_iter().filter(|g| g.count > 0).collect();
        let referenced: BTreeSet<LabelId> = groups
            .iter()
            .flat_map(|g| g.entity.slots.iter().map(|(_, l)| *l))
            .collect();
        let mut dists: BTreeMap<LabelId, Distribution> = BTreeMap::new();
        for &l in &referenced {
            dists.insert(l, labels[l as usize].clone().normalized());
        }

        let consts: BTreeSet<&Distribution> = dists
            .values()
            .filter(|d| !matches!(d, Distribution::Urn(_)))
            .collect();
        let const_ids: BTreeMap<&Distribution, LabelId> = consts
            .iter()
            .enumerate()
            .map(|(i, d)| (*d, i as LabelId))
            .collect();
        let urns: Vec<LabelId> = dists
            .iter()
            .filter(|(_, d)| matches!(d, Distribution::Urn(_)))
            .map(|(l, _)| *l)
            .collect();

        let mut sigs: Vec<(UrnSig, LabelId)> = urns
            .iter()
            .map(|&l| (urn_signature(l, &groups, &dists), l))
            .collect();
        sigs.sort();
        let mut classes: Vec<Vec<LabelId>> = Vec::new();
        for (i, (sig, l)) in sigs.iter().enumerate() {
            if i > 0 && sigs[i - 1].0 == *sig {
                classes.last_mut().unwrap().push(*l);
            } else {
                classes.push(vec![*l]);
            }
        }

        let n_const = const_ids.len() as LabelId;
        let max_label = labels.len();
        let build = |urn_order: &[LabelId]| -> Vec<Group> {
            let mut map = vec![LabelId::MAX; max_label];
            for (&l, d) in &dists {
                if let Some(&id) = const_ids.get(d) {
                    map[l as usize] = id;
                }
            }
            for (i, &l) in urn_order.iter().enumerate() {
                map[l as usize] = n_const + i as LabelId;
            }
            let mut gs: Vec<Group> = groups
                .iter()
                .map(|g| Group {
                    entity: g.entity.relabel(&map),
                    count: g.count,
                })
                .collect();
            gs.sort();
            fuse(gs)
        };

        let mut best_order: Vec<LabelId> = classes.iter().flatten().copied().collect();
        let mut best = build(&best_order);
        let tie_product: usize = classes
            .iter()
            .map(|c| (1..=c.len()).product::<usize>())
            .fold(1usize, |a, b| a.saturating_mul(b));
        if tie_product > 1 && tie_product <= 5040 {
            let mut order = best_order.clone();
            for_each_class_permutation(&classes, 0, &mut order, 0, &mut |o| {
                let cand = build(o);
                if cand < best {
                    best = cand;
                    best_order = o.to_vec();
                }
            });
        }

        let mut out_labels: Vec<Distribution> = consts.into_iter().cloned().collect();
        out_labels.extend(best_order.iter().map(|l| dists[l].clone()));
        LiftedState {
            groups: best,
            labels: out_labels,
        }
    }
}

fn fuse(sorted: Vec<Group>) -> Vec<Group> {
    let mut out: Vec<Group> = Vec::with_capacity(sorted.len());
    for g in sorted {
        match out.last_mut() {
            Some(last) if last.entity == g.entity => last.count += g.count,
            _ => out.push(g),
        }
    }
    out
}

fn for_each_class_permutation(
    classes: &[Vec<LabelId>],
    class: usize,
    order: &mut Vec<LabelId>,
    offset: usize,
    f: &mut dyn FnMut(&[LabelId]),
) {
    if class == classes.len() {
        f(order);
        return;
    }
    let members = &classes[class];
    let mut perm = members.clone();
    permute(&mut perm, 0, &mut |p| {
        order[offset..offset + p.len()].copy_from_slice(p);
        for_each_class_permutation(classes, class + 1, order, offset + p.len(), f);
    });
}

fn permute(items: &mut Vec<LabelId>, k: usize, f: &mut dyn FnMut(&[LabelId])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, f);
        items.swap(k, i);
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SigRef {
    Const(Distribution),
    Own,
    Other(Distribution),
}

type UrnSig = (Distribution, Vec<(u32, Vec<(Slot, SigRef)>)>);

fn urn_signature(
    label: LabelId,
    groups: &[Group],
    dists: &BTreeMap<LabelId, Distribution>,
) -> UrnSig {
    let mut uses: Vec<(u32, Vec<(Slot, SigRef)>)> = groups
        .iter()
        .filter(|g| g.entity.slots.iter().any(|(_, l)| *l == label))
        .map(|g| {
            let shape = g
                .entity
                .slots
                .iter()
                .map(|(s, l)| {
                    let d = &dists[l];
                    let r = if *l == label {
                        SigRef::Own
                    } else if matches!(d, Distribution::Urn(_)) {
                        SigRef::Other(d.clone())
                    } else {
                        SigRef::Const(d.clone())
                    };
                    (s.clone(), r)
                })
                .collect();
            (g.count, shape)
        })
        .collect();
    uses.sort();
    (dists[&label].clone(), uses)
}

impl LiftedState {
    pub fn builder() -> StateBuilder {
        StateBuilder::default()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn labels(&self) -> &[Distribution] {
        &self.labels
    }

    pub fn distribution(&self, label: LabelId) -> &Distribution {
        &self.labels[label as usize]
    }

    pub fn to_raw(&self) -> RawState {
        RawState {
            groups: self.groups.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Number of entities represented (sum of multiplicities).
    pub fn entity_count(&self) -> u64 {
        self.groups.iter().map(|g| g.count as u64).sum()
    }

    /// Re-checks all invariants of the canonical form.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        self.to_raw().validate()
    }

    /// Idempotent; kept for symmetry with [`RawState::canonicalize`].
    pub fn canonicalize(&self) -> LiftedState {
        self.to_raw().canonicalize()
    }

    /// True when every referenced label is a Dirac, i.e. the state
    /// represents a single ground state.
    pub fn is_ground(&self) -> bool {
        self.labels.iter().all(Distribution::is_dirac)
    }

    /// Groups whose `slot` is bound to `Dirac(value)`, with their counts.
    pub fn holders(&self, slot: &Slot, value: &Value) -> u64 {
        self.groups
            .iter()
            .filter(|g| {
                g.entity
                    .label(slot)
                    .and_then(|l| self.labels[l as usize].as_dirac())
                    == Some(value)
            })
            .map(|g| g.count as u64)
            .sum()
    }
}

/// Builds lifted states from named labels.
#[derive(Default, Clone)]
pub struct StateBuilder {
    names: BTreeMap<String, LabelId>,
    defined: BTreeMap<LabelId, Distribution>,
    groups: Vec<Group>,
}

impl StateBuilder {
    fn id(&mut self, name: &str) -> LabelId {
        let next = self.names.len() as LabelId;
        *self.names.entry(name.to_string()).or_insert(next)
    }

    pub fn label(mut self, name: &str, d: Distribution) -> Self {
        let id = self.id(name);
        self.defined.insert(id, d);
        self
    }

    pub fn group(mut self, count: u32, slots: &[(&str, &str)]) -> Self {
        let mut s = Vec::with_capacity(slots.len());
        for (slot, label) in slots {
            let id = self.id(label);
            s.push((Slot::new(slot), id));
        }
        let entity = Entity::new(s);
        self.groups.push(Group { entity, count });
        self
    }

    /// The unvalidated state. Labels referenced but never defined keep ids
    /// past the end of the context so validation reports them as dangling.
    pub fn raw(&self) -> RawState {
        let n_defined = self.defined.len() as LabelId;
        let mut remap = BTreeMap::new();
        let mut labels = Vec::new();
        for (id, d) in &self.defined {
            remap.insert(*id, labels.len() as LabelId);
            labels.push(d.clone());
        }
        let mut next_dangling = n_defined;
        for id in self.names.values() {
            remap.entry(*id).or_insert_with(|| {
                next_dangling += 1;
                next_dangling - 1
            });
        }
        let groups = self
            .groups
            .iter()
            .map(|g| Group {
                entity: Entity {
                    slots: g
                        .entity
                        .slots
                        .iter()
                        .map(|(s, l)| (s.clone(), remap[l]))
                        .collect(),
                },
                count: g.count,
            })
            .collect();
        RawState { groups, labels }
    }

    pub fn build(&self) -> Result<LiftedState> {
        self.raw().into_lifted()
    }
}

impl fmt::Display for LiftedState {
    /// `{ 9×⟨ID:L1, loc:L0⟩, … }` followed by the context block.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{ ")?;
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}×⟨", g.count)?;
            for (j, (s, l)) in g.entity.slots.iter().enumerate() {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{s}:L{l}")?;
            }
            f.write_str("⟩")?;
        }
        f.write_str(" }\n[ ")?;
        for (i, d) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "L{i} = {d}")?;
        }
        f.write_str(" ]")
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn id_urn(n: usize) -> Distribution {
        Distribution::urn((1..=n).map(|i| format!("fl{i}"))).unwrap()
    }

    /// Nine forklifts in storage room 1, one in storage room 2, IDs from an
    /// urn of ten.
    pub fn warehouse_nine_one() -> LiftedState {
        LiftedState::builder()
            .label("LID", id_urn(10))
            .label("LStor1", Distribution::dirac("storage1"))
            .label("LStor2", Distribution::dirac("storage2"))
            .group(9, &[("loc", "LStor1"), ("ID", "LID")])
            .group(1, &[("loc", "LStor2"), ("ID", "LID")])
            .build()
            .unwrap()
    }

    #[test]
    fn validate_examples() {
        let ok = LiftedState::builder()
            .label("LID", id_urn(10))
            .label("LStor1", Distribution::dirac("storage1"))
            .label("LStor2", Distribution::dirac("storage2"))
            .group(9, &[("loc", "LStor1"), ("ID", "LID")])
            .group(1, &[("loc", "LStor2"), ("ID", "LID")]);
        assert_eq!(ok.raw().validate(), Ok(()));

        let dangling = LiftedState::builder()
            .label("LStor1", Distribution::dirac("storage1"))
            .group(1, &[("loc", "LStor1"), ("ID", "LID")]);
        assert!(matches!(dangling.raw().validate(), Err(Violation::DanglingLabel { .. })));
        assert!(dangling.build().is_err());

        let over = LiftedState::builder()
            .label("LID", id_urn(10))
            .label("LStor1", Distribution::dirac("storage1"))
            .group(11, &[("loc", "LStor1"), ("ID", "LID")]);
        assert!(matches!(
            over.raw().validate(),
            Err(Violation::CapacityExceeded { capacity: 10, demand: 11, .. })
        ));
    }

    #[test]
    fn unreferenced_label_is_reported_and_collected() {
        let b = LiftedState::builder()
            .label("A", Distribution::dirac("a"))
            .label("B", Distribution::dirac("b"))
            .group(1, &[("loc", "A")]);
        assert!(matches!(b.raw().validate(), Err(Violation::UnreferencedLabel { .. })));
        let s = b.build().unwrap();
        assert_eq!(s.labels().len(), 1);
        assert_eq!(s.validate(), Ok(()));
    }

    #[test]
    fn canonical_form_is_renaming_invariant() {
        let a = warehouse_nine_one();
        let b = LiftedState::builder()
            .label("LStor2", Distribution::dirac("storage2"))
            .label("LX", id_urn(10))
            .label("LStor1", Distribution::dirac("storage1"))
            .group(1, &[("ID", "LX"), ("loc", "LStor2")])
            .group(9, &[("loc", "LStor1"), ("ID", "LX")])
            .build()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_groups_fuse() {
        let s = LiftedState::builder()
            .label("LID", id_urn(10))
            .label("A", Distribution::dirac("storage1"))
            .label("B", Distribution::dirac("storage1"))
            .group(4, &[("loc", "A"), ("ID", "LID")])
            .group(5, &[("loc", "B"), ("ID", "LID")])
            .build()
            .unwrap();
        assert_eq!(s.groups().len(), 1);
        assert_eq!(s.groups()[0].count, 9);
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let s = warehouse_nine_one();
        assert_eq!(s.canonicalize(), s);
    }

    #[test]
    fn tied_urns_are_canonical() {
        // Two groups with their own urns of equal content, listed in both
        // orders; the tie must be broken identically.
        let mk = |first: &str, second: &str| {
            LiftedState::builder()
                .label(first, Distribution::urn(["a", "b"]).unwrap())
                .label(second, Distribution::urn(["a", "b"]).unwrap())
                .label("X", Distribution::dirac("x"))
                .label("Y", Distribution::dirac("y"))
                .group(1, &[("id", "U1"), ("loc", "X")])
                .group(1, &[("id", "U2"), ("loc", "Y")])
                .group(1, &[("id", "U2"), ("tag", "X")])
                .group(1, &[("id", "U1"), ("tag", "Y")])
                .build()
                .unwrap()
        };
        assert_eq!(mk("U1", "U2"), mk("U2", "U1"));
    }

    #[test]
    fn render_mirrors_notation() {
        let s = warehouse_nine_one();
        let text = s.to_string();
        assert!(text.contains("9×⟨ID:L2, loc:L0⟩"), "{text}");
        assert!(text.contains("L2 = U(fl1, fl10, fl2"), "{text}");
    }
}
