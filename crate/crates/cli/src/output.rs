use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lifted_filter::prob;
use lifted_filter::run::{CompareReport, RunOutput};
use serde::Serialize;

use crate::Failure;

#[derive(Serialize)]
struct MetricsRow {
    engine: String,
    t: u32,
    n_hyp_pre: usize,
    n_hyp_post_update: usize,
    n_hyp_post_predict: usize,
    n_splits: usize,
    n_merges: usize,
    ms: u64,
}

#[derive(Serialize)]
struct MarginalRow {
    engine: String,
    query: String,
    t: u32,
    value: String,
    probability: f64,
    exact: String,
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Failure + '_ {
    move |e| Failure::io(path, e.into())
}

/// Writes `metrics.csv`, `metrics.jsonl` and `marginals.csv` for all runs.
pub fn write_runs(dir: &Path, runs: &[RunOutput], unmerged: bool) -> Result<(), Failure> {
    let rows: Vec<MetricsRow> = runs
        .iter()
        .flat_map(|r| {
            r.steps.iter().map(|s| {
                let m = &s.metrics;
                let (upd, pred) = if unmerged {
                    (m.n_hyp_post_update_unmerged, m.n_hyp_post_predict_unmerged)
                } else {
                    (m.n_hyp_post_update, m.n_hyp_post_predict)
                };
                MetricsRow {
                    engine: r.engine.to_string(),
                    t: m.t,
                    n_hyp_pre: m.n_hyp_pre,
                    n_hyp_post_update: upd,
                    n_hyp_post_predict: pred,
                    n_splits: m.n_splits,
                    n_merges: m.n_merges,
                    ms: m.ms,
                }
            })
        })
        .collect();

    let path = dir.join("metrics.csv");
    let mut w = csv_writer(&path)?;
    for row in &rows {
        w.serialize(row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Failure::io(&path, e))?;

    let path = dir.join("metrics.jsonl");
    let mut w = create(&path)?;
    for row in &rows {
        let line = serde_json::to_string(row).expect("metrics serialize");
        writeln!(w, "{line}").map_err(|e| Failure::io(&path, e))?;
    }
    w.flush().map_err(|e| Failure::io(&path, e))?;

    let path = dir.join("marginals.csv");
    let mut w = csv_writer(&path)?;
    for r in runs {
        for s in &r.steps {
            for (q, m) in r.queries.iter().zip(&s.marginals) {
                for (v, p) in m {
                    let row = MarginalRow {
                        engine: r.engine.to_string(),
                        query: q.to_string(),
                        t: s.metrics.t,
                        value: v.to_string(),
                        probability: prob::to_f64(p),
                        exact: p.to_string(),
                    };
                    w.serialize(row).map_err(csv_err(&path))?;
                }
            }
        }
    }
    w.flush().map_err(|e| Failure::io(&path, e))
}

#[derive(Serialize)]
struct CompareCsvRow {
    t: u32,
    max_diff: f64,
    exact: bool,
    lifted_post_update: usize,
    grounded_post_update: usize,
    lifted_post_predict: usize,
    grounded_post_predict: usize,
}

pub fn write_compare(dir: &Path, report: &CompareReport) -> Result<(), Failure> {
    let path = dir.join("compare.csv");
    let mut w = csv_writer(&path)?;
    for r in &report.rows {
        let row = CompareCsvRow {
            t: r.t,
            max_diff: r.max_diff,
            exact: r.exact,
            lifted_post_update: r.lifted_post_update,
            grounded_post_update: r.grounded_post_update,
            lifted_post_predict: r.lifted_post_predict,
            grounded_post_predict: r.grounded_post_predict,
        };
        w.serialize(row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Failure::io(&path, e))
}
