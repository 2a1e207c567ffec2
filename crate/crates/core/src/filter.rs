//! The lifted Bayesian filter: belief states over lifted states and the
//! update / query / predict recursion.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_traits::Zero;
use rayon::prelude::*;

use crate::action::{successors, ActionSchema};
use crate::error::{Error, Result};
use crate::observation::{observe, Observation, Reading, SensorSpec};
use crate::prob::{self, Prob};
use crate::state::{collapse_to_ground, marginal, mix, unsplit, GroundState, LiftedState};
use crate::value::{Slot, Value};

/// Ground states enumerated per hypothesis, at most, when checking whether
/// the ground representation is smaller.
const GROUND_FALLBACK_BUDGET: usize = 4;

/// Probability distribution over canonical lifted states. Weights are
/// strictly positive and sum to exactly one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LiftedBeliefState {
    hyps: BTreeMap<LiftedState, Prob>,
}

impl LiftedBeliefState {
    /// Merges equal states and normalizes. Fails if no weight is positive.
    pub fn new(weighted: impl IntoIterator<Item = (Prob, LiftedState)>) -> Result<Self> {
        let mut hyps: BTreeMap<LiftedState, Prob> = BTreeMap::new();
        for (w, s) in weighted {
            if w < prob::zero() {
                return Err(Error::InvalidDistribution("negative hypothesis weight".into()));
            }
            if !w.is_zero() {
                *hyps.entry(s).or_insert_with(prob::zero) += w;
            }
        }
        normalize(hyps).map(|hyps| LiftedBeliefState { hyps })
    }

    pub fn point(s: LiftedState) -> Self {
        LiftedBeliefState {
            hyps: [(s, prob::one())].into_iter().collect(),
        }
    }

    pub fn hypotheses(&self) -> &BTreeMap<LiftedState, Prob> {
        &self.hyps
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    /// The ground distribution this belief represents.
    pub fn ground(&self, guard: usize) -> Result<BTreeMap<GroundState, Prob>> {
        let mut out: BTreeMap<GroundState, Prob> = BTreeMap::new();
        for (s, w) in &self.hyps {
            for (g, p) in s.ground(guard)? {
                *out.entry(g).or_insert_with(prob::zero) += w * p;
                if out.len() > guard {
                    return Err(Error::ExplosionGuard { count: out.len(), limit: guard });
                }
            }
        }
        Ok(out)
    }
}

fn normalize(mut hyps: BTreeMap<LiftedState, Prob>) -> Result<BTreeMap<LiftedState, Prob>> {
    let total: Prob = hyps.values().sum();
    if total.is_zero() {
        return Err(Error::ImpossibleObservation);
    }
    for w in hyps.values_mut() {
        *w /= &total;
    }
    Ok(hyps)
}

/// A marginal query: the distribution of `query_slot` for the entity whose
/// `selector_slot` is `selector_value`. Written `SEL_SLOT=VALUE:QUERY_SLOT`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Query {
    pub selector_slot: Slot,
    pub selector_value: Value,
    pub query_slot: Slot,
}

impl Query {
    pub fn new(selector_slot: impl Into<Slot>, selector_value: impl Into<Value>, query_slot: impl Into<Slot>) -> Self {
        Query {
            selector_slot: selector_slot.into(),
            selector_value: selector_value.into(),
            query_slot: query_slot.into(),
        }
    }
}

impl FromStr for Query {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("query `{s}` is not of the form SLOT=VALUE:SLOT"));
        let (sel, q) = s.split_once(':').ok_or_else(bad)?;
        let (slot, value) = sel.split_once('=').ok_or_else(bad)?;
        if [slot, value, q].iter().any(|x| x.trim().is_empty()) {
            return Err(bad());
        }
        Ok(Query::new(slot.trim(), value.trim(), q.trim()))
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}:{}", self.selector_slot, self.selector_value, self.query_slot)
    }
}

/// Σ over hypotheses of weight × marginal. The belief is not modified.
pub fn query(b: &LiftedBeliefState, q: &Query) -> Result<BTreeMap<Value, Prob>> {
    let mut out: BTreeMap<Value, Prob> = BTreeMap::new();
    for (s, w) in &b.hyps {
        for (v, p) in marginal(s, &q.selector_slot, &q.selector_value, &q.query_slot)? {
            *out.entry(v).or_insert_with(prob::zero) += w * p;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FilterConfig {
    /// Maximum number of hypotheses after any phase.
    pub guard: usize,
    /// Drop hypotheses below this weight (off when `None`).
    pub prune: Option<Prob>,
    /// Recombine complete sets of split branches after merging.
    pub unsplit: bool,
    /// Combine hypotheses that differ only in one entity's independent draw.
    pub mix: bool,
    /// Fall back to ground states when they are fewer than the hypotheses.
    pub ground_fallback: bool,
    pub parallel: bool,
    /// Record wall time in the metrics; otherwise `ms` is zero so that
    /// output is reproducible.
    pub timing: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            guard: 1_000_000,
            prune: None,
            unsplit: true,
            mix: true,
            ground_fallback: true,
            parallel: true,
            timing: false,
        }
    }
}

/// Counts gathered during one phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseStats {
    /// Weighted branches produced before merging.
    pub unmerged: usize,
    /// Hypotheses after merging.
    pub merged: usize,
    pub splits: usize,
    /// Branches absorbed by merging plus unsplit recombinations.
    pub merges: usize,
}

/// Per time step metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepMetrics {
    pub t: u32,
    pub n_hyp_pre: usize,
    pub n_hyp_post_update: usize,
    pub n_hyp_post_update_unmerged: usize,
    pub n_hyp_post_predict: usize,
    pub n_hyp_post_predict_unmerged: usize,
    pub n_splits: usize,
    pub n_merges: usize,
    pub ms: u64,
}

type Branches = Vec<(Prob, LiftedState)>;

/// Filter over a fixed model: schemas, named sensors and configuration.
#[derive(Clone, Debug)]
pub struct Filter {
    pub schemas: Vec<ActionSchema>,
    pub sensors: BTreeMap<String, SensorSpec>,
    pub config: FilterConfig,
}

impl Filter {
    pub fn new(schemas: Vec<ActionSchema>, sensors: BTreeMap<String, SensorSpec>, config: FilterConfig) -> Self {
        Filter { schemas, sensors, config }
    }

    fn expand<F>(&self, hyps: &BTreeMap<LiftedState, Prob>, f: F) -> Result<Vec<(Branches, usize)>>
    where
        F: Fn(&LiftedState, &Prob) -> Result<(Branches, usize)> + Sync,
    {
        let hyps: Vec<(&LiftedState, &Prob)> = hyps.iter().collect();
        if self.config.parallel {
            hyps.into_par_iter().map(|(s, w)| f(s, w)).collect()
        } else {
            hyps.into_iter().map(|(s, w)| f(s, w)).collect()
        }
    }

    /// Sums equal branches. Fails once more than `guard` distinct states
    /// are collected.
    fn gather(&self, parts: Vec<(Branches, usize)>, stats: &mut PhaseStats) -> Result<BTreeMap<LiftedState, Prob>> {
        let mut hyps: BTreeMap<LiftedState, Prob> = BTreeMap::new();
        stats.unmerged = 0;
        for (branches, splits) in parts {
            stats.splits += splits;
            stats.unmerged += branches.len();
            for (w, s) in branches {
                *hyps.entry(s).or_insert_with(prob::zero) += w;
            }
            if hyps.len() > self.config.guard {
                return Err(Error::ExplosionGuard { count: hyps.len(), limit: self.config.guard });
            }
        }
        stats.merges += stats.unmerged - hyps.len();
        Ok(hyps)
    }

    /// Exact recombinations that shrink the hypothesis set.
    fn compact(&self, hyps: &mut BTreeMap<LiftedState, Prob>, stats: &mut PhaseStats) {
        if self.config.unsplit {
            stats.merges += unsplit(hyps);
        }
        if self.config.mix {
            stats.merges += mix(hyps);
        }
        if self.config.ground_fallback {
            let removed = collapse_to_ground(hyps, GROUND_FALLBACK_BUDGET);
            stats.merges += removed;
            if removed > 0 && self.config.mix {
                stats.merges += mix(hyps);
            }
        }
    }

    fn finish(&self, mut hyps: BTreeMap<LiftedState, Prob>, mut stats: PhaseStats) -> Result<(LiftedBeliefState, PhaseStats)> {
        self.compact(&mut hyps, &mut stats);
        hyps.retain(|_, w| !w.is_zero());
        if hyps.len() > self.config.guard {
            return Err(Error::ExplosionGuard { count: hyps.len(), limit: self.config.guard });
        }
        let mut hyps = normalize(hyps)?;
        if let Some(eps) = &self.config.prune {
            hyps.retain(|_, w| &*w >= eps);
            hyps = normalize(hyps)?;
        }
        stats.merged = hyps.len();
        Ok((LiftedBeliefState { hyps }, stats))
    }

    /// Conditions the belief on one observation.
    ///
    /// Readings are applied one at a time and equal branches are merged and
    /// recombined in between. Readings that cannot increase the number of hypotheses
    /// (negative presence readings) go first. `unmerged` counts the branches
    /// produced by the last reading.
    pub fn update(&self, b: &LiftedBeliefState, obs: &Observation) -> Result<(LiftedBeliefState, PhaseStats)> {
        let mut used = Vec::with_capacity(obs.readings.len());
        for (id, r) in &obs.readings {
            let spec = self
                .sensors
                .get(id)
                .ok_or_else(|| Error::validation(format!("observation sensor `{id}`"), "unknown sensor"))?;
            let rank = match r {
                Reading::Presence(false) => 0,
                Reading::Identify(_) => 1,
                Reading::Presence(true) => 2,
            };
            used.push((rank, spec, r));
        }
        used.sort_by_key(|(rank, _, _)| *rank);
        let mut stats = PhaseStats { unmerged: b.len(), ..PhaseStats::default() };
        let mut hyps = b.hyps.clone();
        for (_, spec, r) in used {
            let parts = self.expand(&hyps, |s, w| {
                let o = observe(s, spec, r)?;
                Ok((o.branches.into_iter().map(|(q, t)| (w * q, t)).collect(), o.splits))
            })?;
            hyps = self.gather(parts, &mut stats)?;
        }
        self.finish(hyps, stats)
    }

    /// Applies the transition model to every hypothesis.
    pub fn predict(&self, b: &LiftedBeliefState) -> Result<(LiftedBeliefState, PhaseStats)> {
        let parts = self.expand(&b.hyps, |s, w| {
            let succ = successors(s, &self.schemas)?;
            Ok((succ.states.into_iter().map(|(q, t)| (w * q, t)).collect(), succ.splits))
        })?;
        let mut stats = PhaseStats::default();
        let hyps = self.gather(parts, &mut stats)?;
        self.finish(hyps, stats)
    }

    /// One time step: update with `obs`, then predict. Queries are meant to
    /// be answered on the updated belief.
    pub fn step(&self, b: &LiftedBeliefState, t: u32, obs: &Observation) -> Result<StepOutcome> {
        let start = Instant::now();
        let (updated, u) = self.update(b, obs)?;
        let (predicted, p) = self.predict(&updated)?;
        let ms = if self.config.timing { start.elapsed().as_millis() as u64 } else { 0 };
        let metrics = StepMetrics {
            t,
            n_hyp_pre: b.len(),
            n_hyp_post_update: u.merged,
            n_hyp_post_update_unmerged: u.unmerged,
            n_hyp_post_predict: p.merged,
            n_hyp_post_predict_unmerged: p.unmerged,
            n_splits: u.splits + p.splits,
            n_merges: u.merges + p.merges,
            ms,
        };
        Ok(StepOutcome { updated, predicted, metrics })
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub updated: LiftedBeliefState,
    pub predicted: LiftedBeliefState,
    pub metrics: StepMetrics,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{Constraint, Effect, Source};
    use crate::distribution::Distribution;
    use crate::observation::Reading;
    use crate::state::tests::{id_urn, warehouse_nine_one};
    use crate::state::DEFAULT_GUARD;
    use num_traits::One;

    fn all_at_stor1() -> LiftedState {
        LiftedState::builder()
            .label("LID", id_urn(10))
            .label("S1", Distribution::dirac("storage1"))
            .group(10, &[("loc", "S1"), ("ID", "LID")])
            .build()
            .unwrap()
    }

    fn two_hypotheses() -> LiftedBeliefState {
        LiftedBeliefState::new([(prob::ratio(3, 4), warehouse_nine_one()), (prob::ratio(1, 4), all_at_stor1())]).unwrap()
    }

    fn fl1_loc() -> Query {
        "ID=fl1:loc".parse().unwrap()
    }

    fn sensors() -> BTreeMap<String, SensorSpec> {
        [
            ("p2".to_string(), SensorSpec::presence("loc", "storage2")),
            ("id2".to_string(), SensorSpec::identify("loc", "storage2", "ID")),
        ]
        .into_iter()
        .collect()
    }

    fn obs(pairs: &[(&str, Reading)]) -> Observation {
        Observation {
            readings: pairs.iter().map(|(k, r)| (k.to_string(), r.clone())).collect(),
        }
    }

    fn mover(name: &str, from: &str, to: &str) -> ActionSchema {
        ActionSchema::new(
            name,
            vec![vec![Constraint::eq("loc", from)]],
            vec![Effect::Set { participant: 0, slot: Slot::new("loc"), source: Source::Value(Value::new(to)) }],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn query_two_hypothesis_belief() {
        let b = two_hypotheses();
        let m = query(&b, &fl1_loc()).unwrap();
        assert_eq!(m[&Value::new("storage1")], prob::ratio(37, 40));
        assert_eq!(m[&Value::new("storage2")], prob::ratio(3, 40));
        assert_eq!(b, two_hypotheses());
    }

    #[test]
    fn query_edge_cases() {
        let single = LiftedBeliefState::point(all_at_stor1());
        let m = query(&single, &fl1_loc()).unwrap();
        assert!(m[&Value::new("storage1")].is_one());
        let m = query(&single, &"ID=fl77:loc".parse().unwrap()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn query_parsing() {
        assert_eq!(fl1_loc(), Query::new("ID", "fl1", "loc"));
        assert_eq!(fl1_loc().to_string(), "ID=fl1:loc");
        assert!("ID:loc".parse::<Query>().is_err());
        assert!("=x:loc".parse::<Query>().is_err());
    }

    #[test]
    fn update_examples() {
        let f = Filter::new(vec![], sensors(), FilterConfig::default());
        let (b, _) = f.update(&two_hypotheses(), &obs(&[("p2", Reading::Presence(true))])).unwrap();
        assert_eq!(b, LiftedBeliefState::point(warehouse_nine_one()));

        let contradiction = obs(&[("p2", Reading::Presence(true))]);
        let only_stor1 = LiftedBeliefState::point(all_at_stor1());
        assert_eq!(f.update(&only_stor1, &contradiction).unwrap_err(), Error::ImpossibleObservation);

        let read = obs(&[("id2", Reading::Identify([Value::new("fl1")].into_iter().collect()))]);
        let (b, stats) = f.update(&two_hypotheses(), &read).unwrap();
        assert_eq!(b.len(), 1);
        let s = b.hypotheses().keys().next().unwrap();
        let m = marginal(s, &Slot::new("ID"), &Value::new("fl1"), &Slot::new("loc")).unwrap();
        assert!(m[&Value::new("storage2")].is_one());
        assert!(stats.splits >= 1);

        let unknown = obs(&[("nope", Reading::Presence(true))]);
        assert!(matches!(f.update(&only_stor1, &unknown), Err(Error::Validation { .. })));
    }

    #[test]
    fn predict_examples() {
        let f = Filter::new(vec![mover("go", "nowhere", "x")], BTreeMap::new(), FilterConfig::default());
        let b = LiftedBeliefState::point(all_at_stor1());
        assert_eq!(f.predict(&b).unwrap().0, b);

        let one = LiftedState::builder()
            .label("A", Distribution::dirac("stor1"))
            .group(1, &[("loc", "A")])
            .build()
            .unwrap();
        let f = Filter::new(
            vec![mover("stay", "stor1", "stor1"), mover("go", "stor1", "stor2")],
            BTreeMap::new(),
            FilterConfig::default(),
        );
        let (b, stats) = f.predict(&LiftedBeliefState::point(one)).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(stats.unmerged, 1);
        let g = b.ground(DEFAULT_GUARD).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.values().all(|w| *w == prob::ratio(1, 2)));
    }

    #[test]
    fn step_metrics_and_parallel_determinism() {
        let schemas = vec![
            mover("stay1", "storage1", "storage1"),
            mover("go12", "storage1", "storage2"),
            mover("stay2", "storage2", "storage2"),
            mover("go21", "storage2", "storage1"),
        ];
        let run = |parallel| {
            let cfg = FilterConfig { parallel, ..FilterConfig::default() };
            let f = Filter::new(schemas.clone(), sensors(), cfg);
            let o = f.step(&two_hypotheses(), 0, &obs(&[("p2", Reading::Presence(true))])).unwrap();
            assert!(o.metrics.n_hyp_post_update >= 1);
            assert_eq!(o.metrics.n_hyp_pre, 2);
            assert_eq!(o.metrics.ms, 0);
            (o.predicted, o.metrics)
        };
        assert_eq!(run(true), run(false));
    }

    #[test]
    fn prune_and_guard() {
        let cfg = FilterConfig { prune: Some(prob::ratio(1, 2)), ..FilterConfig::default() };
        let f = Filter::new(vec![], BTreeMap::new(), cfg);
        let (b, _) = f.update(&two_hypotheses(), &Observation::default()).unwrap();
        assert_eq!(b, LiftedBeliefState::point(warehouse_nine_one()));

        let cfg = FilterConfig { guard: 1, ..FilterConfig::default() };
        let f = Filter::new(vec![], BTreeMap::new(), cfg);
        assert!(matches!(
            f.update(&two_hypotheses(), &Observation::default()),
            Err(Error::ExplosionGuard { .. })
        ));
    }
}
