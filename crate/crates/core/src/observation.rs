//! Sensor models and observation likelihoods on lifted states.
//!
//! Presence sensors report whether at least one entity has
//! `watched_slot = watched_value`. Identify sensors report the set of
//! identifiers (values of `id_slot`) of those entities. Both may flip
//! readings with a false positive / false negative rate.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::prob::{self, Prob};
use crate::state::{split_on_slot_value, LiftedState};
use crate::value::{Slot, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SensorKind {
    Presence,
    /// Reports the identifiers of occupants that have `id_slot`; other
    /// occupants are invisible to it. `universe` is the set of identifiers
    /// a false positive can be drawn from. It is required when fp > 0 and
    /// must contain every identifier an occupant can hold.
    Identify { id_slot: Slot, universe: Option<BTreeSet<Value>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorSpec {
    pub kind: SensorKind,
    pub watched_slot: Slot,
    pub watched_value: Value,
    false_positive: f64,
    false_negative: f64,
    fp: Prob,
    fn_: Prob,
}

impl SensorSpec {
    pub fn presence(slot: impl Into<Slot>, value: impl Into<Value>) -> Self {
        SensorSpec {
            kind: SensorKind::Presence,
            watched_slot: slot.into(),
            watched_value: value.into(),
            false_positive: 0.0,
            false_negative: 0.0,
            fp: prob::zero(),
            fn_: prob::zero(),
        }
    }

    pub fn identify(slot: impl Into<Slot>, value: impl Into<Value>, id_slot: impl Into<Slot>) -> Self {
        SensorSpec {
            kind: SensorKind::Identify { id_slot: id_slot.into(), universe: None },
            ..SensorSpec::presence(slot, value)
        }
    }

    pub fn with_universe<I, V>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = V>,
        V: Into<Value>,
    {
        if let SensorKind::Identify { universe, .. } = &mut self.kind {
            *universe = Some(ids.into_iter().map(Into::into).collect());
        }
        self
    }

    /// Sets the noise rates; both must lie in [0, 0.5).
    pub fn with_noise(mut self, false_positive: f64, false_negative: f64) -> Result<Self> {
        let exact = |x: f64, what: &str| {
            prob::from_f64(x)
                .filter(|p| *p >= prob::zero() && *p < prob::ratio(1, 2))
                .ok_or_else(|| Error::InvalidDistribution(format!("{what} rate {x} is outside [0, 0.5)")))
        };
        self.fp = exact(false_positive, "false positive")?;
        self.fn_ = exact(false_negative, "false negative")?;
        self.false_positive = false_positive;
        self.false_negative = false_negative;
        if let SensorKind::Identify { universe: None, .. } = self.kind {
            if !self.fp.is_zero() {
                return Err(Error::InvalidDistribution(
                    "an identify sensor with false positives needs an identifier universe".into(),
                ));
            }
        }
        Ok(self)
    }

    pub fn false_positive(&self) -> f64 {
        self.false_positive
    }

    pub fn false_negative(&self) -> f64 {
        self.false_negative
    }

    pub fn exact_false_positive(&self) -> &Prob {
        &self.fp
    }

    pub fn exact_false_negative(&self) -> &Prob {
        &self.fn_
    }

    pub fn is_noise_free(&self) -> bool {
        self.fp.is_zero() && self.fn_.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reading {
    Presence(bool),
    Identify(BTreeSet<Value>),
}

/// Readings of one time step, keyed by sensor id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Observation {
    pub readings: BTreeMap<String, Reading>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PresenceLikelihood {
    Value(Prob),
    /// Whether an entity is at the watched value is not decided yet.
    Split { slot: Slot, value: Value },
}

/// The slot/value split needed before `spec` can be evaluated, if any.
fn undecided(s: &LiftedState, spec: &SensorSpec) -> Option<(Slot, Value)> {
    let uncertain = s.groups().iter().any(|g| {
        g.entity.label(&spec.watched_slot).is_some_and(|l| {
            let d = s.distribution(l);
            !d.is_dirac() && d.can_yield(&spec.watched_value)
        })
    });
    uncertain.then(|| (spec.watched_slot.clone(), spec.watched_value.clone()))
}

fn presence_weight(spec: &SensorSpec, occupied: bool, reading: bool) -> Prob {
    match (occupied, reading) {
        (true, true) => prob::one() - &spec.fn_,
        (true, false) => spec.fn_.clone(),
        (false, true) => spec.fp.clone(),
        (false, false) => prob::one() - &spec.fp,
    }
}

/// Likelihood of a presence reading, or the split that must come first.
pub fn presence_likelihood(s: &LiftedState, spec: &SensorSpec, reading: bool) -> PresenceLikelihood {
    if let Some((slot, value)) = undecided(s, spec) {
        return PresenceLikelihood::Split { slot, value };
    }
    let occupied = s.holders(&spec.watched_slot, &spec.watched_value) > 0;
    PresenceLikelihood::Value(presence_weight(spec, occupied, reading))
}

/// Weighted branches of `s` after conditioning on one reading, with the
/// number of splits performed. Weights are split weight times likelihood;
/// branches of likelihood zero are dropped.
#[derive(Clone, Debug)]
pub struct Observed {
    pub branches: Vec<(Prob, LiftedState)>,
    pub splits: usize,
}

/// Splits `s` as far as the reading demands and weighs every branch.
pub fn observe(s: &LiftedState, spec: &SensorSpec, reading: &Reading) -> Result<Observed> {
    match (&spec.kind, reading) {
        (SensorKind::Presence, Reading::Presence(r)) => {
            let mut splits = 0;
            let mut work = vec![(prob::one(), s.clone())];
            let mut branches = Vec::new();
            while let Some((w, st)) = work.pop() {
                match presence_likelihood(&st, spec, *r) {
                    PresenceLikelihood::Value(l) => {
                        let x = w * l;
                        if !x.is_zero() {
                            branches.push((x, st));
                        }
                    }
                    PresenceLikelihood::Split { slot, value } => {
                        splits += 1;
                        for (q, b) in split_on_slot_value(&st, &slot, &value)? {
                            work.push((&w * q, b));
                        }
                    }
                }
            }
            Ok(Observed { branches, splits })
        }
        (SensorKind::Identify { .. }, Reading::Identify(ids)) => identify_likelihood_update(s, spec, ids),
        _ => Err(Error::Parse("reading does not match the sensor kind".into())),
    }
}

/// Conditions `s` on an identify reading.
///
/// The watched value is decided first; then every reported identifier
/// that an occupant might hold is split out. In the resulting branches each
/// occupant either holds a known reported identifier or certainly holds an
/// unreported one, and the likelihood follows from the noise rates.
pub fn identify_likelihood_update(s: &LiftedState, spec: &SensorSpec, ids: &BTreeSet<Value>) -> Result<Observed> {
    let SensorKind::Identify { id_slot, universe } = &spec.kind else {
        return Err(Error::Parse("not an identify sensor".into()));
    };
    let mut splits = 0;
    let mut work = vec![(prob::one(), s.clone())];
    let mut branches = Vec::new();
    while let Some((w, st)) = work.pop() {
        let request = undecided(&st, spec).or_else(|| {
            ids.iter().find_map(|r| {
                occupants(&st, spec).any(|(_, id)| id.is_some_and(|d| !d.is_dirac() && d.can_yield(r)))
                    .then(|| (id_slot.clone(), r.clone()))
            })
        });
        if let Some((slot, value)) = request {
            splits += 1;
            for (q, b) in split_on_slot_value(&st, &slot, &value)? {
                work.push((&w * q, b));
            }
            continue;
        }
        let mut seen = 0u64;
        let mut missed = 0u64;
        let mut present: BTreeSet<&Value> = BTreeSet::new();
        for (count, id) in occupants(&st, spec) {
            let Some(id) = id else { continue };
            match id.as_dirac() {
                Some(v) if ids.contains(v) => {
                    seen += count;
                    present.insert(v);
                }
                _ => missed += count,
            }
        }
        let ghosts = ids.iter().filter(|r| !present.contains(r)).count() as u64;
        let mut l = prob::pow(&(prob::one() - &spec.fn_), seen as u32)
            * prob::pow(&spec.fn_, missed as u32)
            * prob::pow(&spec.fp, ghosts as u32);
        if let Some(u) = universe {
            let quiet = (u.len() as u64).saturating_sub(seen + missed + ghosts);
            l *= prob::pow(&(prob::one() - &spec.fp), quiet as u32);
        }
        let x = w * l;
        if !x.is_zero() {
            branches.push((x, st));
        }
    }
    Ok(Observed { branches, splits })
}

/// Groups whose watched slot is decided to be the watched value, with the
/// distribution of their identifier slot.
fn occupants<'a>(
    s: &'a LiftedState,
    spec: &'a SensorSpec,
) -> impl Iterator<Item = (u64, Option<&'a crate::distribution::Distribution>)> + 'a {
    let id_slot = match &spec.kind {
        SensorKind::Identify { id_slot, .. } => Some(id_slot),
        SensorKind::Presence => None,
    };
    s.groups().iter().filter_map(move |g| {
        let l = g.entity.label(&spec.watched_slot)?;
        (s.distribution(l).as_dirac() == Some(&spec.watched_value)).then(|| {
            let id = id_slot.and_then(|k| g.entity.label(k)).map(|l| s.distribution(l));
            (g.count as u64, id)
        })
    })
}
