//! Running a scenario against a trace with either engine, and comparing
//! the two runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use num_traits::Signed;

use crate::error::{Error, Result};
use crate::filter::{query, Filter, FilterConfig, LiftedBeliefState, Query, StepMetrics};
use crate::oracle::{ground_initial, GroundFilter};
use crate::prob::{self, Prob};
use crate::scenario::{Scenario, Trace};
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Engine {
    Lifted,
    Grounded,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Lifted => "lifted",
            Engine::Grounded => "grounded",
        })
    }
}

pub type Marginal = BTreeMap<Value, Prob>;

/// What one engine produced at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub metrics: StepMetrics,
    /// One marginal per query, on the updated belief.
    pub marginals: Vec<Marginal>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub engine: Engine,
    pub queries: Vec<Query>,
    pub steps: Vec<StepRecord>,
    /// The time step and error that stopped the run early.
    pub failure: Option<(u32, Error)>,
}

impl RunOutput {
    /// Largest hypothesis count seen in any phase.
    pub fn peak(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.metrics.n_hyp_pre.max(s.metrics.n_hyp_post_update).max(s.metrics.n_hyp_post_predict))
            .max()
            .unwrap_or(0)
    }
}

/// Runs the lifted filter: update with the reading at `t`, answer the
/// queries, then predict unless `t` is the last step.
pub fn run_lifted(sc: &Scenario, trace: &Trace, queries: &[Query], config: FilterConfig) -> RunOutput {
    let timing = config.timing;
    let filter = Filter::new(sc.schemas.clone(), sc.sensors.clone(), config);
    let mut out = RunOutput { engine: Engine::Lifted, queries: queries.to_vec(), steps: Vec::new(), failure: None };
    let mut belief: LiftedBeliefState = sc.initial.clone();
    let last = trace.steps.len().saturating_sub(1);
    for (i, step) in trace.steps.iter().enumerate() {
        let t = step.t;
        let start = Instant::now();
        let result = (|| {
            let (updated, u) = filter.update(&belief, &step.observation)?;
            let marginals = queries.iter().map(|q| query(&updated, q)).collect::<Result<Vec<_>>>()?;
            let mut m = StepMetrics {
                t,
                n_hyp_pre: belief.len(),
                n_hyp_post_update: u.merged,
                n_hyp_post_update_unmerged: u.unmerged,
                n_hyp_post_predict: u.merged,
                n_hyp_post_predict_unmerged: u.merged,
                n_splits: u.splits,
                n_merges: u.merges,
                ms: 0,
            };
            let next = if i < last {
                let (predicted, p) = filter.predict(&updated)?;
                m.n_hyp_post_predict = p.merged;
                m.n_hyp_post_predict_unmerged = p.unmerged;
                m.n_splits += p.splits;
                m.n_merges += p.merges;
                predicted
            } else {
                updated
            };
            Ok((next, m, marginals))
        })();
        match result {
            Ok((next, mut metrics, marginals)) => {
                if timing {
                    metrics.ms = start.elapsed().as_millis() as u64;
                }
                belief = next;
                out.steps.push(StepRecord { metrics, marginals });
            }
            Err(e) => {
                out.failure = Some((t, e));
                break;
            }
        }
    }
    out
}

/// Runs the grounded forward filter with the same phase order. Hypothesis
/// counts are ground-state counts; split and merge counts are zero.
pub fn run_grounded(sc: &Scenario, trace: &Trace, queries: &[Query], guard: usize, timing: bool) -> RunOutput {
    let mut out = RunOutput { engine: Engine::Grounded, queries: queries.to_vec(), steps: Vec::new(), failure: None };
    let first_t = trace.steps.first().map_or(0, |s| s.t);
    let initial = match ground_initial(&sc.initial, guard) {
        Ok(b) => b,
        Err(e) => {
            out.failure = Some((first_t, e));
            return out;
        }
    };
    let mut gf = GroundFilter::new(initial, sc.schemas.clone(), sc.sensors.clone(), guard);
    let last = trace.steps.len().saturating_sub(1);
    for (i, step) in trace.steps.iter().enumerate() {
        let start = Instant::now();
        let pre = gf.len();
        let result = (|| {
            gf.update(&step.observation)?;
            let post_update = gf.len();
            let marginals = queries.iter().map(|q| gf.query(q)).collect::<Result<Vec<_>>>()?;
            if i < last {
                gf.predict()?;
            }
            Ok((post_update, marginals))
        })();
        match result {
            Ok((post_update, marginals)) => {
                let metrics = StepMetrics {
                    t: step.t,
                    n_hyp_pre: pre,
                    n_hyp_post_update: post_update,
                    n_hyp_post_update_unmerged: post_update,
                    n_hyp_post_predict: gf.len(),
                    n_hyp_post_predict_unmerged: gf.len(),
                    n_splits: 0,
                    n_merges: 0,
                    ms: if timing { start.elapsed().as_millis() as u64 } else { 0 },
                };
                out.steps.push(StepRecord { metrics, marginals });
            }
            Err(e) => {
                out.failure = Some((step.t, e));
                break;
            }
        }
    }
    out
}

/// Per time step comparison of a lifted and a grounded run.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub t: u32,
    /// Largest absolute difference over all queried marginal entries.
    pub max_diff: f64,
    /// Whether every marginal agreed exactly.
    pub exact: bool,
    pub lifted_post_update: usize,
    pub grounded_post_update: usize,
    pub lifted_post_predict: usize,
    pub grounded_post_predict: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    /// Set when the runs cover different numbers of steps.
    pub length_mismatch: Option<(usize, usize)>,
}

impl CompareReport {
    pub fn max_diff(&self) -> f64 {
        self.rows.iter().map(|r| r.max_diff).fold(0.0, f64::max)
    }

    /// Whether the lifted count never exceeds the grounded count.
    pub fn lifted_never_larger(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.lifted_post_update <= r.grounded_post_update && r.lifted_post_predict <= r.grounded_post_predict)
    }

    pub fn agrees_within(&self, tol: f64) -> bool {
        self.length_mismatch.is_none() && self.max_diff() <= tol
    }
}

fn diff(a: &Marginal, b: &Marginal) -> Prob {
    let keys: BTreeSet<&Value> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| {
            let x = a.get(k).cloned().unwrap_or_else(prob::zero);
            let y = b.get(k).cloned().unwrap_or_else(prob::zero);
            (x - y).abs()
        })
        .max()
        .unwrap_or_else(prob::zero)
}

pub fn compare(lifted: &RunOutput, grounded: &RunOutput) -> CompareReport {
    let rows = lifted
        .steps
        .iter()
        .zip(&grounded.steps)
        .map(|(l, g)| {
            let d = l
                .marginals
                .iter()
                .zip(&g.marginals)
                .map(|(a, b)| diff(a, b))
                .max()
                .unwrap_or_else(prob::zero);
            CompareRow {
                t: l.metrics.t,
                max_diff: prob::to_f64(&d),
                exact: d == prob::zero(),
                lifted_post_update: l.metrics.n_hyp_post_update,
                grounded_post_update: g.metrics.n_hyp_post_update,
                lifted_post_predict: l.metrics.n_hyp_post_predict,
                grounded_post_predict: g.metrics.n_hyp_post_predict,
            }
        })
        .collect();
    let (a, b) = (lifted.steps.len(), grounded.steps.len());
    CompareReport { rows, length_mismatch: (a != b).then_some((a, b)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{office, sample_trace, warehouse, OfficeItems};
    use crate::state::DEFAULT_GUARD;

    #[test]
    fn small_warehouse_runs_agree() {
        let sc = warehouse(3, 8, 10).unwrap();
        let tr = sample_trace(&sc, 5, 8).unwrap();
        let l = run_lifted(&sc, &tr, &sc.queries, FilterConfig::default());
        let g = run_grounded(&sc, &tr, &sc.queries, DEFAULT_GUARD, false);
        assert!(l.failure.is_none() && g.failure.is_none());
        let r = compare(&l, &g);
        assert_eq!(r.rows.len(), 9);
        assert!(r.rows.iter().all(|r| r.exact));
        assert!(r.lifted_never_larger());
    }

    #[test]
    fn horizon_zero_compares_initial_marginals() {
        let sc = office(2, OfficeItems::Reduced, 0).unwrap();
        let tr = sample_trace(&sc, 1, 0).unwrap();
        let l = run_lifted(&sc, &tr, &sc.queries, FilterConfig::default());
        let g = run_grounded(&sc, &tr, &sc.queries, DEFAULT_GUARD, false);
        let r = compare(&l, &g);
        assert_eq!(r.rows.len(), 1);
        assert!(r.agrees_within(0.0));
    }

    #[test]
    fn length_mismatch_is_reported() {
        let sc = warehouse(2, 4, 10).unwrap();
        let long = sample_trace(&sc, 1, 4).unwrap();
        let short = sample_trace(&sc, 1, 2).unwrap();
        let l = run_lifted(&sc, &long, &sc.queries, FilterConfig::default());
        let g = run_grounded(&sc, &short, &sc.queries, DEFAULT_GUARD, false);
        assert_eq!(compare(&l, &g).length_mismatch, Some((5, 3)));
    }
}
