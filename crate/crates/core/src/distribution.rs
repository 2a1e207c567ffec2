//! Exact discrete value distributions bound to labels in a context.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed};

use crate::error::{Error, Result};
use crate::prob::{self, Prob};
use crate::value::Value;

/// How many values a distribution can hand out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Capacity {
    Finite(u64),
    Unbounded,
}

impl Capacity {
    pub fn allows(self, draws: u64) -> bool {
        match self {
            Capacity::Finite(c) => draws <= c,
            Capacity::Unbounded => true,
        }
    }
}

/// A distribution over values.
///
/// `Urn` draws without replacement from a finite multiset, so all entities
/// sharing an urn label receive distinct copies. `Dirac` and `Categorical`
/// draws are independent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distribution {
    Dirac(Value),
    Urn(BTreeMap<Value, u32>),
    Categorical(BTreeMap<Value, Prob>),
}

impl Distribution {
    pub fn dirac(v: impl Into<Value>) -> Self {
        Distribution::Dirac(v.into())
    }

    /// Urn over the given values; repeated values raise the multiplicity.
    pub fn urn<I, V>(values: I) -> Result<Self>
    where
        I: IntoIterator<Item = V>,
        V: Into<Value>,
    {
        let mut m = BTreeMap::new();
        for v in values {
            *m.entry(v.into()).or_insert(0u32) += 1;
        }
        if m.is_empty() {
            return Err(Error::InvalidDistribution("urn must not be empty".into()));
        }
        Ok(Distribution::Urn(m))
    }

    /// Categorical from exact probabilities that must sum to one.
    pub fn categorical_exact(probs: BTreeMap<Value, Prob>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("categorical must not be empty".into()));
        }
        let mut total = prob::zero();
        for (v, p) in &probs {
            if !p.is_positive() || *p > prob::one() {
                return Err(Error::InvalidDistribution(format!(
                    "probability of `{v}` must be in (0, 1]"
                )));
            }
            total += p;
        }
        if !total.is_one() {
            return Err(Error::InvalidDistribution("probabilities must sum to 1".into()));
        }
        Ok(Distribution::Categorical(probs))
    }

    /// Categorical from float probabilities. The sum must be within 1e-12 of
    /// one; the exact values are then renormalised so they sum to one exactly.
    pub fn categorical<I, V>(probs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (V, f64)>,
        V: Into<Value>,
    {
        let mut m = BTreeMap::new();
        let mut fsum = 0.0;
        for (v, p) in probs {
            let v = v.into();
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "probability of `{v}` must be in (0, 1], got {p}"
                )));
            }
            fsum += p;
            let exact = prob::from_f64(p).expect("finite");
            if m.insert(v.clone(), exact).is_some() {
                return Err(Error::InvalidDistribution(format!("duplicate value `{v}`")));
            }
        }
        if m.is_empty() {
            return Err(Error::InvalidDistribution("categorical must not be empty".into()));
        }
        if (fsum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {fsum}, expected 1"
            )));
        }
        let total: Prob = m.values().sum();
        for p in m.values_mut() {
            *p = &*p / &total;
        }
        Ok(Distribution::Categorical(m))
    }

    pub fn capacity(&self) -> Capacity {
        match self {
            Distribution::Urn(m) => Capacity::Finite(m.values().map(|&c| c as u64).sum()),
            _ => Capacity::Unbounded,
        }
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, Distribution::Dirac(_))
    }

    pub fn as_dirac(&self) -> Option<&Value> {
        match self {
            Distribution::Dirac(v) => Some(v),
            _ => None,
        }
    }

    /// Values with positive probability, ascending.
    pub fn support(&self) -> Vec<&Value> {
        match self {
            Distribution::Dirac(v) => vec![v],
            Distribution::Urn(m) => m.keys().collect(),
            Distribution::Categorical(m) => m.keys().collect(),
        }
    }

    pub fn can_yield(&self, v: &Value) -> bool {
        match self {
            Distribution::Dirac(x) => x == v,
            Distribution::Urn(m) => m.contains_key(v),
            Distribution::Categorical(m) => m.contains_key(v),
        }
    }

    /// Marginal probability that a single draw yields `v`.
    pub fn draw_probability(&self, v: &Value) -> Prob {
        match self {
            Distribution::Dirac(x) => {
                if x == v {
                    prob::one()
                } else {
                    prob::zero()
                }
            }
            Distribution::Urn(m) => {
                let total: u64 = m.values().map(|&c| c as u64).sum();
                let c = m.get(v).copied().unwrap_or(0) as u64;
                prob::ratio(c, total)
            }
            Distribution::Categorical(m) => m.get(v).cloned().unwrap_or_else(prob::zero),
        }
    }

    /// Collapses representations that only admit one value to `Dirac`.
    pub fn normalized(self) -> Self {
        match &self {
            Distribution::Urn(m) if m.len() == 1 => {
                Distribution::Dirac(m.keys().next().unwrap().clone())
            }
            Distribution::Categorical(m) if m.len() == 1 => {
                Distribution::Dirac(m.keys().next().unwrap().clone())
            }
            _ => self,
        }
    }

    pub(crate) fn check(&self) -> std::result::Result<(), String> {
        match self {
            Distribution::Dirac(_) => Ok(()),
            Distribution::Urn(m) => {
                if m.is_empty() {
                    Err("empty urn".into())
                } else if m.values().any(|&c| c == 0) {
                    Err("urn multiplicity zero".into())
                } else {
                    Ok(())
                }
            }
            Distribution::Categorical(m) => {
                if m.is_empty() {
                    return Err("empty categorical".into());
                }
                if m.values().any(|p| !p.is_positive() || *p > prob::one()) {
                    return Err("categorical probability outside (0, 1]".into());
                }
                let s: Prob = m.values().sum();
                if !s.is_one() {
                    return Err("categorical does not sum to 1".into());
                }
                Ok(())
            }
        }
    }

    /// All ordered `k`-draws with their probabilities; equal value tuples
    /// are merged.
    pub fn enumerate_draws(&self, k: usize) -> Result<Vec<(Vec<Value>, Prob)>> {
        if !self.capacity().allows(k as u64) {
            let Capacity::Finite(c) = self.capacity() else { unreachable!() };
            return Err(Error::CapacityExceeded {
                capacity: c,
                requested: k as u64,
            });
        }
        let mut out = BTreeMap::new();
        match self {
            Distribution::Dirac(v) => {
                out.insert(vec![v.clone(); k], prob::one());
            }
            Distribution::Urn(m) => {
                let mut rem = m.clone();
                let mut total: u64 = m.values().map(|&c| c as u64).sum();
                let mut prefix = Vec::with_capacity(k);
                draw_urn(&mut rem, &mut total, k, &mut prefix, prob::one(), &mut out);
            }
            Distribution::Categorical(m) => {
                let mut prefix = Vec::with_capacity(k);
                draw_cat(m, k, &mut prefix, prob::one(), &mut out);
            }
        }
        Ok(out.into_iter().collect())
    }
}

fn draw_urn(
    rem: &mut BTreeMap<Value, u32>,
    total: &mut u64,
    k: usize,
    prefix: &mut Vec<Value>,
    p: Prob,
    out: &mut BTreeMap<Vec<Value>, Prob>,
) {
    if prefix.len() == k {
        *out.entry(prefix.clone()).or_insert_with(prob::zero) += p;
        return;
    }
    let keys: Vec<Value> = rem.iter().filter(|(_, &c)| c > 0).map(|(v, _)| v.clone()).collect();
    for v in keys {
        let c = rem[&v];
        let q = &p * prob::ratio(c as u64, *total);
        *rem.get_mut(&v).unwrap() -= 1;
        *total -= 1;
        prefix.push(v.clone());
        draw_urn(rem, total, k, prefix, q, out);
        prefix.pop();
        *total += 1;
        *rem.get_mut(&v).unwrap() += 1;
    }
}

fn draw_cat(
    m: &BTreeMap<Value, Prob>,
    k: usize,
    prefix: &mut Vec<Value>,
    p: Prob,
    out: &mut BTreeMap<Vec<Value>, Prob>,
) {
    if prefix.len() == k {
        *out.entry(prefix.clone()).or_insert_with(prob::zero) += p;
        return;
    }
    for (v, q) in m {
        prefix.push(v.clone());
        draw_cat(m, k, prefix, &p * q, out);
        prefix.pop();
    }
}

/// Removes one copy of `v` from an urn. The result may be empty; callers
/// never store an empty urn in a context.
pub fn remove_value(urn: &BTreeMap<Value, u32>, v: &Value) -> Result<BTreeMap<Value, u32>> {
    let mut out = urn.clone();
    match out.get_mut(v) {
        Some(c) if *c > 1 => *c -= 1,
        Some(_) => {
            out.remove(v);
        }
        None => return Err(Error::ValueAbsent(v.clone())),
    }
    Ok(out)
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Dirac(v) => write!(f, "δ({v})"),
            Distribution::Urn(m) => {
                f.write_str("U(")?;
                let mut first = true;
                for (v, &c) in m {
                    for _ in 0..c {
                        if !first {
                            f.write_str(", ")?;
                        }
                        first = false;
                        write!(f, "{v}")?;
                    }
                }
                f.write_str(")")
            }
            Distribution::Categorical(m) => {
                f.write_str("Cat(")?;
                for (i, (v, p)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}:{p}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Value {
        Value::new(s)
    }

    fn ids(n: usize) -> Distribution {
        Distribution::urn((1..=n).map(|i| format!("fl{i}"))).unwrap()
    }

    /// Ordered draws over individually labelled copies, counted by brute
    /// force; independent of the recursive implementation.
    fn labelled_copy_oracle(values: &[&str], k: usize) -> BTreeMap<Vec<Value>, Prob> {
        fn perms(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in 0..n {
                if !cur.contains(&i) {
                    cur.push(i);
                    perms(n, k, cur, out);
                    cur.pop();
                }
            }
        }
        let mut all = Vec::new();
        perms(values.len(), k, &mut Vec::new(), &mut all);
        let each = prob::ratio(1, all.len() as u64);
        let mut out = BTreeMap::new();
        for p in all {
            let t: Vec<Value> = p.iter().map(|&i| v(values[i])).collect();
            *out.entry(t).or_insert_with(prob::zero) += &each;
        }
        out
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(ids(10).capacity(), Capacity::Finite(10));
        assert_eq!(Distribution::dirac("storage1").capacity(), Capacity::Unbounded);
        let aab = Distribution::urn(["a", "a", "b"]).unwrap();
        assert_eq!(aab.capacity(), Capacity::Finite(3));
        let cat = Distribution::categorical([("a", 0.5), ("b", 0.5)]).unwrap();
        assert_eq!(cat.capacity(), Capacity::Unbounded);
    }

    #[test]
    fn draw_probability_examples() {
        assert_eq!(ids(10).draw_probability(&v("fl1")), prob::ratio(1, 10));
        assert_eq!(Distribution::dirac("storage1").draw_probability(&v("storage1")), prob::one());
        let aab = Distribution::urn(["a", "a", "b"]).unwrap();
        let oracle = labelled_copy_oracle(&["a", "a", "b"], 1);
        assert_eq!(oracle[&vec![v("a")]], prob::ratio(2, 3));
        assert_eq!(aab.draw_probability(&v("a")), prob::ratio(2, 3));
    }

    #[test]
    fn remove_value_examples() {
        let Distribution::Urn(m) = ids(10) else { panic!() };
        let out = remove_value(&m, &v("fl1")).unwrap();
        let Distribution::Urn(expected) = Distribution::urn((2..=10).map(|i| format!("fl{i}"))).unwrap()
        else {
            panic!()
        };
        assert_eq!(out, expected);

        let Distribution::Urn(aab) = Distribution::urn(["a", "a", "b"]).unwrap() else { panic!() };
        let Distribution::Urn(ab) = Distribution::urn(["a", "b"]).unwrap() else { panic!() };
        assert_eq!(remove_value(&aab, &v("a")).unwrap(), ab);

        let Distribution::Urn(a) = Distribution::urn(["a"]).unwrap() else { panic!() };
        assert_eq!(remove_value(&a, &v("b")), Err(Error::ValueAbsent(v("b"))));
    }

    #[test]
    fn enumerate_draws_examples() {
        let xy = Distribution::urn(["x", "y"]).unwrap();
        assert_eq!(
            xy.enumerate_draws(2).unwrap(),
            vec![
                (vec![v("x"), v("y")], prob::ratio(1, 2)),
                (vec![v("y"), v("x")], prob::ratio(1, 2)),
            ]
        );
        assert_eq!(
            Distribution::dirac("s").enumerate_draws(3).unwrap(),
            vec![(vec![v("s"); 3], prob::one())]
        );
        let aab = Distribution::urn(["a", "a", "b"]).unwrap();
        let got: BTreeMap<_, _> = aab.enumerate_draws(2).unwrap().into_iter().collect();
        let oracle = labelled_copy_oracle(&["a", "a", "b"], 2);
        assert_eq!(got, oracle);
        assert_eq!(got[&vec![v("a"), v("a")]], prob::ratio(1, 3));
        assert_eq!(got.len(), 3);

        assert_eq!(
            xy.enumerate_draws(3),
            Err(Error::CapacityExceeded { capacity: 2, requested: 3 })
        );
    }

    #[test]
    fn categorical_validation() {
        assert!(Distribution::categorical([("a", 0.3), ("b", 0.3)]).is_err());
        assert!(Distribution::categorical([("a", 0.0), ("b", 1.0)]).is_err());
        let d = Distribution::categorical([("a", 0.1), ("b", 0.9)]).unwrap();
        let Distribution::Categorical(m) = &d else { panic!() };
        let s: Prob = m.values().sum();
        assert!(s.is_one());
        assert!(Distribution::urn(Vec::<&str>::new()).is_err());
    }

    #[test]
    fn normalization_collapses_single_value() {
        let u = Distribution::urn(["a", "a"]).unwrap().normalized();
        assert_eq!(u, Distribution::dirac("a"));
        let c = Distribution::categorical([("a", 1.0)]).unwrap().normalized();
        assert_eq!(c, Distribution::dirac("a"));
    }

    #[test]
    fn render() {
        assert_eq!(Distribution::urn(["b", "a", "a"]).unwrap().to_string(), "U(a, a, b)");
        assert_eq!(Distribution::dirac("s1").to_string(), "δ(s1)");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_dist() -> impl Strategy<Value = Distribution> {
            prop_oneof![
                "[a-d]".prop_map(Distribution::dirac),
                proptest::collection::vec("[a-d]", 1..6).prop_map(|vs| Distribution::urn(vs).unwrap()),
                proptest::collection::btree_map("[a-d]", 1u64..5, 1..4).prop_map(|m| {
                    let total: u64 = m.values().sum();
                    let probs = m.into_iter().map(|(k, w)| (Value::from(k), prob::ratio(w, total))).collect();
                    Distribution::categorical_exact(probs).unwrap()
                }),
            ]
        }

        proptest! {
            #[test]
            fn draw_probabilities_sum_to_one(d in arb_dist()) {
                let s: Prob = d.support().into_iter().map(|x| d.draw_probability(x)).sum();
                prop_assert!(s.is_one());
            }

            #[test]
            fn first_draw_marginal_matches_enumeration(vs in proptest::collection::vec("[a-c]", 1..6), k in 1usize..4) {
                let d = Distribution::urn(vs.clone()).unwrap();
                prop_assume!(k <= vs.len());
                let draws = d.enumerate_draws(k).unwrap();
                let total: Prob = draws.iter().map(|(_, p)| p.clone()).sum();
                prop_assert!(total.is_one());
                for x in d.support() {
                    let m: Prob = draws.iter().filter(|(t, _)| &t[0] == x).map(|(_, p)| p.clone()).sum();
                    prop_assert_eq!(m, d.draw_probability(x));
                }
            }

            #[test]
            fn remove_then_reinsert_is_identity(vs in proptest::collection::vec("[a-c]", 1..6), pick in 0usize..6) {
                let Distribution::Urn(m) = Distribution::urn(vs.clone()).unwrap() else { unreachable!() };
                let x = Value::from(vs[pick % vs.len()].as_str());
                let mut removed = remove_value(&m, &x).unwrap();
                *removed.entry(x).or_insert(0) += 1;
                prop_assert_eq!(removed, m);
            }
        }
    }

    #[test]
    fn zero_check() {
        assert!(ids(3).check().is_ok());
        let mut m = BTreeMap::new();
        m.insert(v("a"), 0u32);
        assert!(Distribution::Urn(m).check().is_err());
    }
}
