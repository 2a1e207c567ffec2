//! Scenarios: location graph, initial belief, schemas, sensors and queries,
//! loaded from `.scn` files or built in.

mod builtin;
pub mod format;
mod sample;
mod trace;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use crate::action::{ActionSchema, Constraint, Effect, Op, Source};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::filter::{LiftedBeliefState, Query};
use crate::observation::{SensorKind, SensorSpec};
use crate::prob::{self, Prob};
use crate::state::{Entity, Group, LabelId, LiftedState, RawState};
use crate::value::{Slot, Value};

pub use builtin::{builtin, office, warehouse, OfficeItems};
pub use format::FORMAT_VERSION;
use format::*;
pub use sample::sample_trace;
pub use trace::{Trace, TraceStep};

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub slots: BTreeSet<Slot>,
    pub locations: Vec<Value>,
    pub edges: Vec<(Value, Value)>,
    pub initial: LiftedBeliefState,
    pub schemas: Vec<ActionSchema>,
    pub sensors: BTreeMap<String, SensorSpec>,
    pub queries: Vec<Query>,
    pub horizon: u32,
}

impl Scenario {
    /// Reads and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Scenario::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Scenario::from_doc(doc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_doc()).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn from_doc(doc: ScenarioDoc) -> Result<Scenario> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::validation(
                "format_version",
                format!("unsupported version {}, expected {FORMAT_VERSION}", doc.format_version),
            ));
        }
        let mut slots = BTreeSet::new();
        for (i, s) in doc.slots.iter().enumerate() {
            if !slots.insert(Slot::new(s)) {
                return Err(Error::validation(format!("slots[{i}]"), format!("slot `{s}` declared twice")));
            }
        }
        let slot = |name: &str, at: String| -> Result<Slot> {
            let s = Slot::new(name);
            if slots.contains(&s) {
                Ok(s)
            } else {
                Err(Error::validation(at, format!("undeclared slot `{name}`")))
            }
        };

        let locations: Vec<Value> = doc.locations.iter().map(Value::new).collect();
        let known: BTreeSet<&Value> = locations.iter().collect();
        if known.len() != locations.len() {
            return Err(Error::validation("locations", "duplicate location"));
        }
        let mut edges = Vec::new();
        for (i, (a, b)) in doc.edges.iter().enumerate() {
            for x in [a, b] {
                if !known.contains(&Value::new(x)) {
                    return Err(Error::validation(format!("edges[{i}]"), format!("unknown location `{x}`")));
                }
            }
            edges.push((Value::new(a), Value::new(b)));
        }
        check_connected(&locations, &edges)?;

        let hyps = match (doc.initial, doc.labels, doc.entities) {
            (Some(h), None, None) => h
                .into_iter()
                .enumerate()
                .map(|(i, h)| (format!("initial[{i}]"), h))
                .collect::<Vec<_>>(),
            (None, Some(labels), Some(entities)) => {
                vec![(String::new(), HypothesisDoc { weight: Weight::Number(1.0), labels, entities })]
            }
            _ => {
                return Err(Error::validation(
                    "initial",
                    "give either `initial` or both `labels` and `entities`",
                ))
            }
        };
        let mut weighted = Vec::new();
        for (at, h) in hyps {
            let prefix = if at.is_empty() { String::new() } else { format!("{at}.") };
            let w = h
                .weight
                .to_prob()
                .filter(|w| *w > prob::zero())
                .ok_or_else(|| Error::validation(format!("{prefix}weight"), "weight must be positive"))?;
            let mut raw = RawState::default();
            let mut names: BTreeMap<&str, LabelId> = BTreeMap::new();
            for (name, d) in &h.labels {
                let dist = distribution_from_doc(d)
                    .map_err(|e| Error::validation(format!("{prefix}labels.{name}"), e.to_string()))?;
                names.insert(name, raw.add_label(dist));
            }
            if h.entities.is_empty() {
                return Err(Error::validation(format!("{prefix}entities"), "no entities"));
            }
            for (j, g) in h.entities.iter().enumerate() {
                let here = format!("{prefix}entities[{j}]");
                if g.count == 0 {
                    return Err(Error::validation(format!("{here}.count"), "count must be at least 1"));
                }
                if g.slots.is_empty() {
                    return Err(Error::validation(format!("{here}.slots"), "entity without slots"));
                }
                let mut bound = Vec::new();
                for (s, l) in &g.slots {
                    let s = slot(s, format!("{here}.slots.{s}"))?;
                    let id = *names
                        .get(l.as_str())
                        .ok_or_else(|| Error::validation(format!("{here}.slots.{s}"), format!("undefined label `{l}`")))?;
                    bound.push((s, id));
                }
                raw.groups.push(Group { entity: Entity::new(bound), count: g.count });
            }
            raw.check()
                .map_err(|v| Error::validation(if at.is_empty() { "entities".into() } else { at.clone() }, v.to_string()))?;
            weighted.push((w, raw.canonicalize()));
        }
        let total: Prob = weighted.iter().map(|(w, _)| w.clone()).sum();
        if (prob::to_f64(&total) - 1.0).abs() > 1e-9 {
            return Err(Error::validation("initial", format!("weights sum to {}", prob::to_f64(&total))));
        }
        let initial = LiftedBeliefState::new(weighted)?;

        let mut schemas = Vec::new();
        let mut schema_names = BTreeSet::new();
        for (i, s) in doc.schemas.iter().enumerate() {
            let at = format!("schemas[{i}]");
            if !schema_names.insert(s.name.as_str()) {
                return Err(Error::validation(format!("{at}.name"), format!("duplicate schema `{}`", s.name)));
            }
            let mut participants = Vec::new();
            for (p, cs) in s.participants.iter().enumerate() {
                let mut out = Vec::new();
                for (k, c) in cs.iter().enumerate() {
                    let here = format!("{at}.participants[{p}][{k}]");
                    let sl = slot(&c.slot, format!("{here}.slot"))?;
                    let op = match (c.op.as_str(), &c.value, &c.values) {
                        ("eq", Some(v), None) => Op::Eq(Value::new(v)),
                        ("neq", Some(v), None) => Op::Neq(Value::new(v)),
                        ("in", None, Some(vs)) => Op::In(vs.iter().map(Value::new).collect()),
                        _ => {
                            return Err(Error::validation(
                                here,
                                "op must be `eq`/`neq` with `value` or `in` with `values`",
                            ))
                        }
                    };
                    out.push(Constraint { slot: sl, op });
                }
                participants.push(out);
            }
            let mut effects = Vec::new();
            for (k, e) in s.effects.iter().enumerate() {
                let here = format!("{at}.effects[{k}]");
                effects.push(match e {
                    EffectDoc::Set(d) => Effect::Set {
                        participant: d.participant,
                        slot: slot(&d.slot, format!("{here}.slot"))?,
                        source: source_from_doc(&d.source, &here, &slot)?,
                    },
                    EffectDoc::Remove(d) => Effect::Remove {
                        participant: d.participant,
                        slot: slot(&d.slot, format!("{here}.slot"))?,
                    },
                    EffectDoc::Consume(p) => Effect::Consume(*p),
                    EffectDoc::Produce(d) => {
                        let mut out = Vec::new();
                        for (s, src) in &d.slots {
                            let sl = slot(s, format!("{here}.slots.{s}"))?;
                            out.push((sl, source_from_doc(src, &format!("{here}.slots.{s}"), &slot)?));
                        }
                        Effect::Produce(out)
                    }
                });
            }
            let schema = ActionSchema::new(&s.name, participants, effects, s.rate).map_err(|e| match e {
                Error::InvalidEffect { reason, .. } => Error::validation(at.clone(), reason),
                other => other,
            })?;
            schemas.push(schema);
        }

        let mut sensors = BTreeMap::new();
        for (i, s) in doc.sensors.iter().enumerate() {
            let at = format!("sensors[{i}]");
            let watched = slot(&s.slot, format!("{at}.slot"))?;
            let spec = match (s.kind.as_str(), &s.id_slot) {
                ("presence", None) => SensorSpec::presence(watched, s.value.as_str()),
                ("identify", Some(id)) => {
                    let id = slot(id, format!("{at}.id_slot"))?;
                    let spec = SensorSpec::identify(watched, s.value.as_str(), id);
                    match &s.universe {
                        Some(u) => spec.with_universe(u.iter().map(Value::new)),
                        None => spec,
                    }
                }
                _ => {
                    return Err(Error::validation(
                        format!("{at}.kind"),
                        "kind must be `presence`, or `identify` with an `id_slot`",
                    ))
                }
            };
            let spec = spec
                .with_noise(s.fp, s.fn_)
                .map_err(|e| Error::validation(at.clone(), e.to_string()))?;
            if sensors.insert(s.id.clone(), spec).is_some() {
                return Err(Error::validation(format!("{at}.id"), format!("duplicate sensor `{}`", s.id)));
            }
        }

        let mut queries = Vec::new();
        for (i, q) in doc.queries.iter().enumerate() {
            let at = format!("queries[{i}]");
            let q: Query = q.parse().map_err(|e: Error| Error::validation(at.clone(), e.to_string()))?;
            slot(q.selector_slot.as_str(), at.clone())?;
            slot(q.query_slot.as_str(), at)?;
            queries.push(q);
        }

        Ok(Scenario {
            name: doc.name,
            slots,
            locations,
            edges,
            initial,
            schemas,
            sensors,
            queries,
            horizon: doc.horizon,
        })
    }

    pub fn to_doc(&self) -> ScenarioDoc {
        let mut hyps: Vec<HypothesisDoc> = self
            .initial
            .hypotheses()
            .iter()
            .map(|(s, w)| hypothesis_doc(s, w))
            .collect();
        let (labels, entities, initial) = if hyps.len() == 1 && hyps[0].weight == Weight::Number(1.0) {
            let h = hyps.pop().unwrap();
            (Some(h.labels), Some(h.entities), None)
        } else {
            (None, None, Some(hyps))
        };
        ScenarioDoc {
            format_version: FORMAT_VERSION,
            name: self.name.clone(),
            horizon: self.horizon,
            slots: self.slots.iter().map(|s| s.to_string()).collect(),
            locations: self.locations.iter().map(|v| v.to_string()).collect(),
            edges: self.edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            labels,
            entities,
            initial,
            schemas: self.schemas.iter().map(schema_doc).collect(),
            sensors: self
                .sensors
                .iter()
                .map(|(id, s)| {
                    let (kind, id_slot, universe) = match &s.kind {
                        SensorKind::Presence => ("presence", None, None),
                        SensorKind::Identify { id_slot, universe } => (
                            "identify",
                            Some(id_slot.to_string()),
                            universe.as_ref().map(|u| u.iter().map(|v| v.to_string()).collect()),
                        ),
                    };
                    SensorDoc {
                        id: id.clone(),
                        kind: kind.into(),
                        slot: s.watched_slot.to_string(),
                        value: s.watched_value.to_string(),
                        id_slot,
                        universe,
                        fp: s.false_positive(),
                        fn_: s.false_negative(),
                    }
                })
                .collect(),
            queries: self.queries.iter().map(|q| q.to_string()).collect(),
        }
    }

    /// Whether `a` and `b` are joined by an edge.
    pub fn adjacent(&self, a: &Value, b: &Value) -> bool {
        self.edges.iter().any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }
}

fn check_connected(locations: &[Value], edges: &[(Value, Value)]) -> Result<()> {
    let Some(first) = locations.first() else { return Ok(()) };
    let mut seen: BTreeSet<&Value> = [first].into_iter().collect();
    let mut queue: VecDeque<&Value> = [first].into_iter().collect();
    while let Some(x) = queue.pop_front() {
        for (a, b) in edges {
            let next = if a == x { b } else if b == x { a } else { continue };
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    match locations.iter().find(|l| !seen.contains(l)) {
        Some(l) => Err(Error::validation("edges", format!("location `{l}` is not connected"))),
        None => Ok(()),
    }
}

fn distribution_from_doc(d: &DistributionDoc) -> Result<Distribution> {
    match d {
        DistributionDoc::Dirac(v) => Ok(Distribution::dirac(v.as_str())),
        DistributionDoc::Urn(vs) => Distribution::urn(vs.iter().map(String::as_str)),
        DistributionDoc::Cat(m) => {
            let mut exact = BTreeMap::new();
            for (v, w) in m {
                let p = w
                    .to_prob()
                    .ok_or_else(|| Error::InvalidDistribution(format!("probability of `{v}` is not a number")))?;
                exact.insert(Value::new(v), p);
            }
            Distribution::categorical_exact(exact)
        }
    }
}

fn distribution_doc(d: &Distribution) -> DistributionDoc {
    match d {
        Distribution::Dirac(v) => DistributionDoc::Dirac(v.to_string()),
        Distribution::Urn(m) => DistributionDoc::Urn(
            m.iter()
                .flat_map(|(v, &c)| std::iter::repeat_n(v.to_string(), c as usize))
                .collect(),
        ),
        Distribution::Categorical(m) => {
            DistributionDoc::Cat(m.iter().map(|(v, p)| (v.to_string(), Weight::from_prob(p))).collect())
        }
    }
}

fn hypothesis_doc(s: &LiftedState, w: &Prob) -> HypothesisDoc {
    HypothesisDoc {
        weight: Weight::from_prob(w),
        labels: s
            .labels()
            .iter()
            .enumerate()
            .map(|(i, d)| (format!("L{i}"), distribution_doc(d)))
            .collect(),
        entities: s
            .groups()
            .iter()
            .map(|g| GroupDoc {
                count: g.count,
                slots: g
                    .entity
                    .slots()
                    .iter()
                    .map(|(s, l)| (s.to_string(), format!("L{l}")))
                    .collect(),
            })
            .collect(),
    }
}

fn source_from_doc(d: &SourceDoc, at: &str, slot: &dyn Fn(&str, String) -> Result<Slot>) -> Result<Source> {
    match (&d.value, &d.copy) {
        (Some(v), None) => Ok(Source::Value(Value::new(v))),
        (None, Some(c)) => Ok(Source::Copy {
            participant: c.participant,
            slot: slot(&c.slot, format!("{at}.copy.slot"))?,
        }),
        _ => Err(Error::validation(at, "give exactly one of `value` or `copy`")),
    }
}

fn source_doc(s: &Source) -> SourceDoc {
    match s {
        Source::Value(v) => SourceDoc { value: Some(v.to_string()), copy: None },
        Source::Copy { participant, slot } => SourceDoc {
            value: None,
            copy: Some(CopyDoc { participant: *participant, slot: slot.to_string() }),
        },
    }
}

fn schema_doc(a: &ActionSchema) -> SchemaDoc {
    SchemaDoc {
        name: a.name().to_string(),
        rate: a.rate(),
        participants: a
            .participants()
            .iter()
            .map(|cs| {
                cs.iter()
                    .map(|c| {
                        let (op, value, values) = match &c.op {
                            Op::Eq(v) => ("eq", Some(v.to_string()), None),
                            Op::Neq(v) => ("neq", Some(v.to_string()), None),
                            Op::In(vs) => ("in", None, Some(vs.iter().map(|v| v.to_string()).collect())),
                        };
                        ConstraintDoc { slot: c.slot.to_string(), op: op.into(), value, values }
                    })
                    .collect()
            })
            .collect(),
        effects: a
            .effects()
            .iter()
            .map(|e| match e {
                Effect::Set { participant, slot, source } => EffectDoc::Set(SetDoc {
                    participant: *participant,
                    slot: slot.to_string(),
                    source: source_doc(source),
                }),
                Effect::Remove { participant, slot } => EffectDoc::Remove(RemoveDoc {
                    participant: *participant,
                    slot: slot.to_string(),
                }),
                Effect::Consume(p) => EffectDoc::Consume(*p),
                Effect::Produce(slots) => EffectDoc::Produce(ProduceDoc {
                    slots: slots.iter().map(|(s, src)| (s.to_string(), source_doc(src))).collect(),
                }),
            })
            .collect(),
    }
}

/// Parses `name[:key=value,...]` into a name and parameters.
pub fn parse_reference(text: &str) -> Result<(String, BTreeMap<String, String>)> {
    let (name, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut params = BTreeMap::new();
    for kv in rest.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("scenario parameter `{kv}` is not key=value")))?;
        params.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok((name.trim().to_string(), params))
}

/// Builds a scenario from a `name[:key=value,...]` reference.
pub fn from_reference(text: &str) -> Result<Scenario> {
    let (name, params) = parse_reference(text)?;
    builtin(&name, &params)
}
