//! Observation traces: a header line followed by one JSON record per time
//! step, each with sensor readings and optionally the ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Scenario, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::observation::{Observation, Reading, SensorKind};
use crate::state::{GroundEntity, GroundState};
use crate::value::{Slot, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub t: u32,
    pub observation: Observation,
    pub truth: Option<GroundState>,
}

/// Readings for time steps `0..=horizon`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub scenario: String,
    pub seed: Option<u64>,
    pub steps: Vec<TraceStep>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    horizon: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ReadingDoc {
    Presence(bool),
    Identify(BTreeSet<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t: u32,
    sensors: BTreeMap<String, ReadingDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Vec<BTreeMap<Slot, Value>>>,
}

impl Trace {
    /// Number of prediction steps covered.
    pub fn horizon(&self) -> u32 {
        self.steps.len().saturating_sub(1) as u32
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.steps.iter().map(|s| &s.observation)
    }

    pub fn read(r: impl BufRead) -> Result<Trace> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(Error::Parse(format!("line {}: {e}", i + 1)))),
        });
        let (n, first) = lines.next().ok_or_else(|| Error::Parse("empty trace".into()))??;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| Error::Parse(format!("line {n}: header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "line {n}: unsupported format_version {}",
                header.format_version
            )));
        }
        let mut steps = Vec::new();
        for line in lines {
            let (n, text) = line?;
            let rec: Record = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("line {n}: {e}")))?;
            if rec.t as usize != steps.len() {
                return Err(Error::Parse(format!("line {n}: expected t = {}, found {}", steps.len(), rec.t)));
            }
            let readings = rec
                .sensors
                .into_iter()
                .map(|(id, r)| {
                    let r = match r {
                        ReadingDoc::Presence(b) => Reading::Presence(b),
                        ReadingDoc::Identify(ids) => Reading::Identify(ids.into_iter().map(Value::from).collect()),
                    };
                    (id, r)
                })
                .collect();
            let truth = rec
                .truth
                .map(|es| GroundState::new(es.into_iter().map(GroundEntity).collect()));
            steps.push(TraceStep { t: rec.t, observation: Observation { readings }, truth });
        }
        if steps.len() != header.horizon as usize + 1 {
            return Err(Error::Parse(format!(
                "header announces horizon {} but the trace has {} records",
                header.horizon,
                steps.len()
            )));
        }
        Ok(Trace { scenario: header.scenario, seed: header.seed, steps })
    }

    pub fn parse(text: &str) -> Result<Trace> {
        Trace::read(text.as_bytes())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Trace> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Trace::read(std::io::BufReader::new(f))
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = Header {
            format_version: FORMAT_VERSION,
            scenario: self.scenario.clone(),
            seed: self.seed,
            horizon: self.horizon(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for s in &self.steps {
            let rec = Record {
                t: s.t,
                sensors: s
                    .observation
                    .readings
                    .iter()
                    .map(|(id, r)| {
                        let r = match r {
                            Reading::Presence(b) => ReadingDoc::Presence(*b),
                            Reading::Identify(ids) => ReadingDoc::Identify(ids.iter().map(|v| v.to_string()).collect()),
                        };
                        (id.clone(), r)
                    })
                    .collect(),
                truth: s.truth.as_ref().map(|g| g.entities().iter().map(|e| e.0.clone()).collect()),
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("json is utf-8")
    }

    /// Checks that every reading names a sensor of `sc` and has its kind.
    pub fn check_against(&self, sc: &Scenario) -> Result<()> {
        for s in &self.steps {
            for (id, r) in &s.observation.readings {
                let spec = sc
                    .sensors
                    .get(id)
                    .ok_or_else(|| Error::validation(format!("t={}.sensors.{id}", s.t), "unknown sensor"))?;
                let ok = matches!(
                    (&spec.kind, r),
                    (SensorKind::Presence, Reading::Presence(_)) | (SensorKind::Identify { .. }, Reading::Identify(_))
                );
                if !ok {
                    return Err(Error::validation(
                        format!("t={}.sensors.{id}", s.t),
                        "reading does not match the sensor kind",
                    ));
                }
            }
        }
        Ok(())
    }
}
