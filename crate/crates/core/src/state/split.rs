//! Splitting lifted states on a slot value, and the inverse operations.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use super::{Group, LabelId, LiftedState, RawState};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::prob::{self, Prob};
use crate::value::{Slot, Value};

/// Partitions `s` into weighted lifted states in which it is decided which
/// entities hold `value` in `slot`.
///
/// Every uncertain label bound to `slot` that can yield `value` is split.
/// For an urn, all slots drawing from it are considered: each branch fixes
/// how many entities of each group hold the value (those are broken out
/// with a `Dirac(value)` label) and every remaining draw comes from the urn
/// with all copies of `value` removed. Weights are the exact hypergeometric
/// probabilities of each pattern. Categorical labels split per group into
/// binomially many holders.
///
/// The weighted union of the branches' ground distributions equals the
/// ground distribution of `s`.
pub fn split_on_slot_value(
    s: &LiftedState,
    slot: &Slot,
    value: &Value,
) -> Result<Vec<(Prob, LiftedState)>> {
    let in_slot: BTreeSet<LabelId> = s
        .groups
        .iter()
        .filter_map(|g| g.entity.label(slot))
        .collect();
    if in_slot.is_empty() {
        return Err(Error::SlotAbsent(slot.clone()));
    }
    let candidates: Vec<LabelId> = in_slot
        .into_iter()
        .filter(|&l| s.labels[l as usize].can_yield(value))
        .collect();
    if candidates.is_empty() {
        return Err(Error::ValueImpossible {
            slot: slot.clone(),
            value: value.clone(),
        });
    }

    let mut branches = vec![(prob::one(), s.to_raw())];
    for &l in &candidates {
        let mut next = Vec::new();
        for (w, raw) in branches {
            let parts = match &raw.labels[l as usize] {
                Distribution::Dirac(_) => vec![(prob::one(), raw)],
                Distribution::Urn(_) => split_urn(&raw, l, value),
                Distribution::Categorical(_) => split_categorical(&raw, l, slot, value),
            };
            next.extend(parts.into_iter().map(|(q, r)| (&w * q, r)));
        }
        branches = next;
    }

    let mut order: Vec<LiftedState> = Vec::new();
    let mut weights: BTreeMap<LiftedState, Prob> = BTreeMap::new();
    for (w, raw) in branches {
        if w.is_zero() {
            continue;
        }
        let st = raw.canonicalize();
        match weights.get_mut(&st) {
            Some(acc) => *acc += w,
            None => {
                order.push(st.clone());
                weights.insert(st, w);
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|st| {
            let w = weights.remove(&st).unwrap();
            (w, st)
        })
        .collect())
}

/// One group's draws from the split urn: which slots reference it.
struct UrnUse {
    group: usize,
    slots: Vec<Slot>,
    count: u32,
}

fn split_urn(raw: &RawState, label: LabelId, value: &Value) -> Vec<(Prob, RawState)> {
    let Distribution::Urn(m) = &raw.labels[label as usize] else { unreachable!() };
    let n_total: u64 = m.values().map(|&c| c as u64).sum();
    let n_value = m.get(value).copied().unwrap_or(0) as u64;
    let uses: Vec<UrnUse> = raw
        .groups
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let slots: Vec<Slot> = g
                .entity
                .slots
                .iter()
                .filter(|(_, l)| *l == label)
                .map(|(s, _)| s.clone())
                .collect();
            (!slots.is_empty()).then_some(UrnUse {
                group: i,
                slots,
                count: g.count,
            })
        })
        .collect();
    let draws: u64 = uses.iter().map(|u| u.count as u64 * u.slots.len() as u64).sum();

    let mut rest = m.clone();
    rest.remove(value);

    // patterns[i] = for use i, the counts per non-empty slot subset (bitmask)
    let mut out = Vec::new();
    let mut patterns: Vec<Vec<(u32, u32)>> = Vec::with_capacity(uses.len());
    enumerate_patterns(&uses, 0, n_value, &mut patterns, &mut |patterns| {
        let held: u64 = patterns
            .iter()
            .flatten()
            .map(|&(mask, n)| n as u64 * mask.count_ones() as u64)
            .sum();
        let mut w = prob::from_int(
            prob::falling(n_value, held) * prob::falling(n_total - n_value, draws - held),
        ) / prob::from_int(prob::falling(n_total, draws));
        if w.is_zero() {
            return;
        }
        for (u, pat) in uses.iter().zip(patterns.iter()) {
            let used: u64 = pat.iter().map(|&(_, n)| n as u64).sum();
            let mut ways = prob::factorial(u.count as u64) / prob::factorial(u.count as u64 - used);
            for &(_, n) in pat {
                ways /= prob::factorial(n as u64);
            }
            w *= prob::from_int(ways);
        }

        let mut r = raw.clone();
        r.labels[label as usize] = if rest.is_empty() {
            Distribution::Dirac(value.clone())
        } else {
            Distribution::Urn(rest.clone())
        };
        let dirac = r.add_label(Distribution::Dirac(value.clone()));
        for (u, pat) in uses.iter().zip(patterns.iter()) {
            let base = r.groups[u.group].entity.clone();
            let mut used = 0;
            for &(mask, n) in pat {
                if n == 0 {
                    continue;
                }
                used += n;
                let mut e = base.clone();
                for (bit, s) in u.slots.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        e.set(s.clone(), dirac);
                    }
                }
                r.groups.push(Group { entity: e, count: n });
            }
            r.groups[u.group].count -= used;
        }
        out.push((w, r));
    });
    out
}

fn enumerate_patterns(
    uses: &[UrnUse],
    i: usize,
    budget: u64,
    acc: &mut Vec<Vec<(u32, u32)>>,
    f: &mut dyn FnMut(&[Vec<(u32, u32)>]),
) {
    if i == uses.len() {
        f(acc);
        return;
    }
    let u = &uses[i];
    let masks: Vec<u32> = (1..(1u32 << u.slots.len())).collect();
    let mut pat = Vec::new();
    fill_masks(&masks, 0, u.count, budget, &mut pat, &mut |pat, left| {
        acc.push(pat.to_vec());
        enumerate_patterns(uses, i + 1, left, acc, f);
        acc.pop();
    });
}

/// Chooses a count for every mask with Σ counts ≤ `room` and the number of
/// held copies within `budget`.
fn fill_masks(
    masks: &[u32],
    k: usize,
    room: u32,
    budget: u64,
    pat: &mut Vec<(u32, u32)>,
    f: &mut dyn FnMut(&[(u32, u32)], u64),
) {
    if k == masks.len() {
        f(pat, budget);
        return;
    }
    let bits = masks[k].count_ones() as u64;
    let mut n = 0u32;
    while n <= room && n as u64 * bits <= budget {
        pat.push((masks[k], n));
        fill_masks(masks, k + 1, room - n, budget - n as u64 * bits, pat, f);
        pat.pop();
        n += 1;
    }
}

fn split_categorical(
    raw: &RawState,
    label: LabelId,
    slot: &Slot,
    value: &Value,
) -> Vec<(Prob, RawState)> {
    let Distribution::Categorical(m) = &raw.labels[label as usize] else { unreachable!() };
    let p = m.get(value).cloned().unwrap_or_else(prob::zero);
    let q = prob::one() - &p;
    let mut rest = m.clone();
    rest.remove(value);
    let rest = (!rest.is_empty()).then(|| {
        let total: Prob = rest.values().sum();
        Distribution::Categorical(rest.into_iter().map(|(v, x)| (v, x / &total)).collect())
    });
    let affected: Vec<(usize, u32)> = raw
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.entity.label(slot) == Some(label))
        .map(|(i, g)| (i, g.count))
        .collect();

    let mut out = Vec::new();
    let mut holders = vec![0u32; affected.len()];
    loop {
        let mut w = prob::one();
        for (&(_, c), &j) in affected.iter().zip(&holders) {
            w *= prob::from_int(prob::binomial(c as u64, j as u64));
            w *= prob::pow(&p, j);
            w *= prob::pow(&q, c - j);
        }
        if !w.is_zero() {
            let mut r = raw.clone();
            let dirac = r.add_label(Distribution::Dirac(value.clone()));
            let rest_label = rest.clone().map(|d| r.add_label(d));
            for (&(gi, c), &j) in affected.iter().zip(&holders) {
                let mut held = r.groups[gi].entity.clone();
                held.set(slot.clone(), dirac);
                if j > 0 {
                    r.groups.push(Group { entity: held, count: j });
                }
                if let Some(rl) = rest_label {
                    r.groups[gi].entity.set(slot.clone(), rl);
                }
                r.groups[gi].count = c - j;
            }
            out.push((w, r));
        }
        // odometer over holder counts
        let mut k = 0;
        while k < affected.len() {
            if holders[k] < affected[k].1 {
                holders[k] += 1;
                break;
            }
            holders[k] = 0;
            k += 1;
        }
        if k == affected.len() {
            break;
        }
    }
    out
}

/// Combines states with equal canonical form by summing their weights.
/// Zero weights are dropped; output is sorted by state.
pub fn merge(states: Vec<(Prob, LiftedState)>) -> Vec<(Prob, LiftedState)> {
    let mut acc: BTreeMap<LiftedState, Prob> = BTreeMap::new();
    for (w, s) in states {
        if w.is_zero() {
            continue;
        }
        *acc.entry(s).or_insert_with(prob::zero) += w;
    }
    acc.into_iter().map(|(s, w)| (w, s)).collect()
}

/// Replaces complete, exactly proportioned sets of split branches by their
/// parent state. Returns the number of recombinations performed.
///
/// A candidate parent is formed by re-inserting a broken-out `Dirac(v)`
/// slot into an urn bound to the same slot; it is accepted only if
/// splitting the parent on that value reproduces branches that are all
/// present with weights in exactly the split's proportions.
pub fn unsplit(map: &mut BTreeMap<LiftedState, Prob>) -> usize {
    let mut done = 0;
    loop {
        let mut changed = false;
        let keys: Vec<LiftedState> = map.keys().cloned().collect();
        for t in keys {
            if !map.contains_key(&t) {
                continue;
            }
            if let Some((parent, w, branches)) = unsplit_candidate(&t, map) {
                for b in &branches {
                    map.remove(b);
                }
                *map.entry(parent).or_insert_with(prob::zero) += w;
                done += 1;
                changed = true;
            }
        }
        if !changed {
            return done;
        }
    }
}

/// Value that stands in for the mixed draw while hypotheses are compared.
const HOLE: &str = "\u{0}mix";

/// Combines hypotheses that agree everywhere except in the independent
/// draw of one slot of a single entity (a count-one group bound to a Dirac
/// or categorical label). Their weighted sum is one hypothesis whose label
/// is the weighted mixture of the individual labels. Returns the number of
/// hypotheses absorbed.
pub fn mix(map: &mut BTreeMap<LiftedState, Prob>) -> usize {
    let mut keys_of: BTreeMap<LiftedState, Vec<LiftedState>> = BTreeMap::new();
    let mut buckets: BTreeMap<LiftedState, Vec<LiftedState>> = BTreeMap::new();
    let mut ready: BTreeSet<LiftedState> = BTreeSet::new();
    let index = |s: &LiftedState,
                 keys_of: &mut BTreeMap<LiftedState, Vec<LiftedState>>,
                 buckets: &mut BTreeMap<LiftedState, Vec<LiftedState>>,
                 ready: &mut BTreeSet<LiftedState>| {
        let keys = mix_keys(s);
        for k in &keys {
            let b = buckets.entry(k.clone()).or_default();
            b.push(s.clone());
            if b.len() == 2 {
                ready.insert(k.clone());
            }
        }
        keys_of.insert(s.clone(), keys);
    };
    for s in map.keys() {
        index(s, &mut keys_of, &mut buckets, &mut ready);
    }

    let mut done = 0;
    while let Some(key) = ready.pop_first() {
        let Some(members) = buckets.remove(&key) else { continue };
        if members.len() < 2 {
            continue;
        }
        let hole = Distribution::dirac(HOLE);
        let mut total = prob::zero();
        let mut acc: BTreeMap<Value, Prob> = BTreeMap::new();
        for s in &members {
            let w = map.remove(s).expect("member present");
            let d = mixed_label(s, &key);
            for v in d.support() {
                *acc.entry(v.clone()).or_insert_with(prob::zero) += &w * d.draw_probability(v);
            }
            total += w;
            for k in keys_of.remove(s).expect("indexed") {
                if k == key {
                    continue;
                }
                if let Some(b) = buckets.get_mut(&k) {
                    b.retain(|x| x != s);
                    if b.len() < 2 {
                        ready.remove(&k);
                    }
                }
            }
        }
        for p in acc.values_mut() {
            *p /= &total;
        }
        let mut raw = key.to_raw();
        let at = raw.labels.iter().position(|d| *d == hole).expect("hole label");
        raw.labels[at] = Distribution::Categorical(acc).normalized();
        let merged = raw.canonicalize();
        done += members.len() - 1;
        match map.get_mut(&merged) {
            Some(w) => *w += total,
            None => {
                map.insert(merged.clone(), total);
                index(&merged, &mut keys_of, &mut buckets, &mut ready);
            }
        }
    }
    done
}

/// The states obtained from `s` by replacing one mixable reference by the
/// placeholder label.
fn mix_keys(s: &LiftedState) -> Vec<LiftedState> {
    let mut keys = BTreeSet::new();
    for (gi, g) in s.groups.iter().enumerate() {
        if g.count != 1 {
            continue;
        }
        for (slot, l) in &g.entity.slots {
            if matches!(s.labels[*l as usize], Distribution::Urn(_)) {
                continue;
            }
            let mut raw = s.to_raw();
            let hole = raw.add_label(Distribution::dirac(HOLE));
            raw.groups[gi].entity.set(slot.clone(), hole);
            keys.insert(raw.canonicalize());
        }
    }
    keys.into_iter().collect()
}

/// The label of `s` that `key` replaces by the placeholder.
fn mixed_label(s: &LiftedState, key: &LiftedState) -> Distribution {
    for (gi, g) in s.groups.iter().enumerate() {
        if g.count != 1 {
            continue;
        }
        for (slot, l) in &g.entity.slots {
            let d = &s.labels[*l as usize];
            if matches!(d, Distribution::Urn(_)) {
                continue;
            }
            let mut raw = s.to_raw();
            let hole = raw.add_label(Distribution::dirac(HOLE));
            raw.groups[gi].entity.set(slot.clone(), hole);
            if raw.canonicalize() == *key {
                return d.clone();
            }
        }
    }
    unreachable!("key derived from state")
}

fn unsplit_candidate(
    t: &LiftedState,
    map: &BTreeMap<LiftedState, Prob>,
) -> Option<(LiftedState, Prob, Vec<LiftedState>)> {
    for (gi, g) in t.groups.iter().enumerate() {
        for (slot, l) in &g.entity.slots {
            let Distribution::Dirac(v) = &t.labels[*l as usize] else { continue };
            let urns: BTreeSet<LabelId> = t
                .groups
                .iter()
                .filter_map(|h| h.entity.label(slot))
                .filter(|&u| matches!(t.labels[u as usize], Distribution::Urn(_)))
                .collect();
            for u in urns {
                let mut raw = t.to_raw();
                raw.groups[gi].entity.set(slot.clone(), u);
                if let Distribution::Urn(m) = &mut raw.labels[u as usize] {
                    *m.entry(v.clone()).or_insert(0) += g.count;
                }
                if raw.check().is_err() {
                    continue;
                }
                let parent = raw.canonicalize();
                let Ok(branches) = split_on_slot_value(&parent, slot, v) else { continue };
                if branches.is_empty() {
                    continue;
                }
                let Some((wt, _)) = branches.iter().find(|(_, b)| b == t) else { continue };
                let scale = &map[t] / wt;
                let complete = branches
                    .iter()
                    .all(|(w, b)| map.get(b).is_some_and(|have| *have == &scale * w));
                if complete {
                    return Some((parent, scale, branches.into_iter().map(|(_, b)| b).collect()));
                }
            }
        }
    }
    None
}

/// Distribution of `query_slot` for the entity whose `selector_slot` equals
/// `selector_value`, computed on split copies; `s` is untouched. The total
/// mass is below one when the selector value may be held by no entity.
pub fn marginal(
    s: &LiftedState,
    selector_slot: &Slot,
    selector_value: &Value,
    query_slot: &Slot,
) -> Result<BTreeMap<Value, Prob>> {
    let branches = match split_on_slot_value(s, selector_slot, selector_value) {
        Ok(b) => b,
        Err(Error::SlotAbsent(_)) | Err(Error::ValueImpossible { .. }) => return Ok(BTreeMap::new()),
        Err(e) => return Err(e),
    };
    let mut out = BTreeMap::new();
    for (w, b) in branches {
        let holders: Vec<&Group> = b
            .groups
            .iter()
            .filter(|g| {
                g.entity
                    .label(selector_slot)
                    .and_then(|l| b.labels[l as usize].as_dirac())
                    == Some(selector_value)
            })
            .collect();
        let n: u64 = holders.iter().map(|g| g.count as u64).sum();
        if n == 0 {
            continue;
        }
        if n > 1 {
            return Err(Error::SelectorAmbiguous {
                slot: selector_slot.clone(),
                value: selector_value.clone(),
            });
        }
        let Some(ql) = holders[0].entity.label(query_slot) else { continue };
        let d = &b.labels[ql as usize];
        for v in d.support() {
            *out.entry(v.clone()).or_insert_with(prob::zero) += &w * d.draw_probability(v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::tests::{id_urn, warehouse_nine_one};
    use crate::state::{GroundState, DEFAULT_GUARD};
    use num_traits::One;

    fn v(s: &str) -> Value {
        Value::new(s)
    }
    fn sl(s: &str) -> Slot {
        Slot::new(s)
    }

    fn rest_urn() -> Distribution {
        Distribution::urn((2..=10).map(|i| format!("fl{i}"))).unwrap()
    }

    /// fl1 broken out in storage room 1.
    fn fl1_at_stor1() -> LiftedState {
        LiftedState::builder()
            .label("LID'", rest_urn())
            .label("LID''", Distribution::dirac("fl1"))
            .label("LStor1", Distribution::dirac("storage1"))
            .label("LStor2", Distribution::dirac("storage2"))
            .group(8, &[("loc", "LStor1"), ("ID", "LID'")])
            .group(1, &[("loc", "LStor1"), ("ID", "LID''")])
            .group(1, &[("loc", "LStor2"), ("ID", "LID'")])
            .build()
            .unwrap()
    }

    /// fl1 broken out in storage room 2.
    fn fl1_at_stor2() -> LiftedState {
        LiftedState::builder()
            .label("LID'", rest_urn())
            .label("LID''", Distribution::dirac("fl1"))
            .label("LStor1", Distribution::dirac("storage1"))
            .label("LStor2", Distribution::dirac("storage2"))
            .group(9, &[("loc", "LStor1"), ("ID", "LID'")])
            .group(1, &[("loc", "LStor2"), ("ID", "LID''")])
            .build()
            .unwrap()
    }

    fn weighted_ground(parts: &[(Prob, LiftedState)]) -> BTreeMap<GroundState, Prob> {
        let mut out = BTreeMap::new();
        for (w, s) in parts {
            for (g, p) in s.ground(DEFAULT_GUARD).unwrap() {
                *out.entry(g).or_insert_with(prob::zero) += w * p;
            }
        }
        out
    }

    #[test]
    fn split_nine_one_on_fl1() {
        let s = warehouse_nine_one();
        let got: BTreeMap<LiftedState, Prob> = split_on_slot_value(&s, &sl("ID"), &v("fl1"))
            .unwrap()
            .into_iter()
            .map(|(w, s)| (s, w))
            .collect();
        let expected: BTreeMap<LiftedState, Prob> =
            [(fl1_at_stor1(), prob::ratio(9, 10)), (fl1_at_stor2(), prob::ratio(1, 10))]
                .into_iter()
                .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn split_on_determined_value_is_identity() {
        let s = fl1_at_stor2();
        let out = split_on_slot_value(&s, &sl("ID"), &v("fl1"));
        // the urn cannot yield fl1, the Dirac already holds it
        assert_eq!(out.unwrap(), vec![(prob::one(), s)]);
    }

    #[test]
    fn split_full_urn_single_group() {
        let s = LiftedState::builder()
            .label("U", Distribution::urn(["a", "b", "c"]).unwrap())
            .label("X", Distribution::dirac("x"))
            .group(3, &[("loc", "X"), ("id", "U")])
            .build()
            .unwrap();
        let out = split_on_slot_value(&s, &sl("id"), &v("a")).unwrap();
        let expected = LiftedState::builder()
            .label("U", Distribution::urn(["b", "c"]).unwrap())
            .label("A", Distribution::dirac("a"))
            .label("X", Distribution::dirac("x"))
            .group(2, &[("loc", "X"), ("id", "U")])
            .group(1, &[("loc", "X"), ("id", "A")])
            .build()
            .unwrap();
        assert_eq!(out, vec![(prob::one(), expected)]);
        assert_eq!(weighted_ground(&out), weighted_ground(&[(prob::one(), s)]));
    }

    #[test]
    fn split_errors() {
        let s = warehouse_nine_one();
        assert_eq!(
            split_on_slot_value(&s, &sl("colour"), &v("red")),
            Err(Error::SlotAbsent(sl("colour")))
        );
        assert!(matches!(
            split_on_slot_value(&s, &sl("ID"), &v("fl99")),
            Err(Error::ValueImpossible { .. })
        ));
    }

    #[test]
    fn split_with_spare_capacity_has_absent_branch() {
        let s = LiftedState::builder()
            .label("U", id_urn(4))
            .label("X", Distribution::dirac("x"))
            .group(2, &[("loc", "X"), ("id", "U")])
            .build()
            .unwrap();
        let out = split_on_slot_value(&s, &sl("id"), &v("fl1")).unwrap();
        assert_eq!(out.len(), 2);
        let ws: Vec<Prob> = out.iter().map(|(w, _)| w.clone()).collect();
        assert!(ws.contains(&prob::ratio(1, 2)));
        assert_eq!(weighted_ground(&out), weighted_ground(&[(prob::one(), s)]));
    }

    #[test]
    fn split_multiplicity_and_categorical() {
        let s = LiftedState::builder()
            .label("U", Distribution::urn(["a", "a", "b", "c"]).unwrap())
            .label("C", Distribution::categorical([("a", 0.5), ("z", 0.5)]).unwrap())
            .label("X", Distribution::dirac("x"))
            .group(2, &[("loc", "X"), ("id", "U")])
            .group(1, &[("id", "U"), ("alt", "U")])
            .group(2, &[("id", "C")])
            .build()
            .unwrap();
        let out = split_on_slot_value(&s, &sl("id"), &v("a")).unwrap();
        assert!(out.len() > 3);
        let total: Prob = out.iter().map(|(w, _)| w.clone()).sum();
        assert!(total.is_one());
        assert_eq!(weighted_ground(&out), weighted_ground(&[(prob::one(), s)]));
    }

    #[test]
    fn merge_sums_equal_states() {
        let s = warehouse_nine_one();
        let renamed = LiftedState::builder()
            .label("Q", id_urn(10))
            .label("A", Distribution::dirac("storage1"))
            .label("B", Distribution::dirac("storage2"))
            .group(1, &[("loc", "B"), ("ID", "Q")])
            .group(9, &[("loc", "A"), ("ID", "Q")])
            .build()
            .unwrap();
        let out = merge(vec![(prob::ratio(3, 10), s.clone()), (prob::ratio(2, 10), renamed)]);
        assert_eq!(out, vec![(prob::ratio(1, 2), s.clone())]);

        let other = fl1_at_stor1();
        let out = merge(vec![(prob::ratio(1, 2), s.clone()), (prob::ratio(1, 2), other.clone())]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn unsplit_restores_parent() {
        let mut map: BTreeMap<LiftedState, Prob> = [
            (fl1_at_stor1(), prob::ratio(9, 10)),
            (fl1_at_stor2(), prob::ratio(1, 10)),
        ]
        .into_iter()
        .collect();
        // plain merge cannot recombine them
        assert_eq!(merge(map.iter().map(|(s, w)| (w.clone(), s.clone())).collect()).len(), 2);
        let before = weighted_ground(&map.iter().map(|(s, w)| (w.clone(), s.clone())).collect::<Vec<_>>());
        assert_eq!(unsplit(&mut map), 1);
        assert_eq!(map.len(), 1);
        assert_eq!(map[&warehouse_nine_one()], prob::one());
        let after = weighted_ground(&map.iter().map(|(s, w)| (w.clone(), s.clone())).collect::<Vec<_>>());
        assert_eq!(before, after);
    }

    #[test]
    fn unsplit_requires_exact_proportions() {
        let mut map: BTreeMap<LiftedState, Prob> = [
            (fl1_at_stor1(), prob::ratio(1, 2)),
            (fl1_at_stor2(), prob::ratio(1, 2)),
        ]
        .into_iter()
        .collect();
        assert_eq!(unsplit(&mut map), 0);
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn marginal_examples() {
        let m = marginal(&warehouse_nine_one(), &sl("ID"), &v("fl1"), &sl("loc")).unwrap();
        assert_eq!(m[&v("storage1")], prob::ratio(9, 10));
        assert_eq!(m[&v("storage2")], prob::ratio(1, 10));

        let all1 = LiftedState::builder()
            .label("LID", id_urn(10))
            .label("LStor1", Distribution::dirac("storage1"))
            .group(10, &[("loc", "LStor1"), ("ID", "LID")])
            .build()
            .unwrap();
        let m = marginal(&all1, &sl("ID"), &v("fl1"), &sl("loc")).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m[&v("storage1")].is_one());

        let none = marginal(&fl1_at_stor2(), &sl("ID"), &v("fl42"), &sl("loc")).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn marginal_ambiguous_selector() {
        let s = LiftedState::builder()
            .label("U", Distribution::urn(["a", "a", "b"]).unwrap())
            .label("X", Distribution::dirac("x"))
            .group(2, &[("loc", "X"), ("id", "U")])
            .build()
            .unwrap();
        assert!(matches!(
            marginal(&s, &sl("id"), &v("a"), &sl("loc")),
            Err(Error::SelectorAmbiguous { .. })
        ));
    }
}
