//! Serialized form of scenario files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::prob::{self, Prob};

pub const FORMAT_VERSION: u32 = 1;

/// A probability written either as a number or as an exact `"p/q"` string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Number(f64),
    Text(String),
}

impl Weight {
    pub fn to_prob(&self) -> Option<Prob> {
        match self {
            Weight::Number(x) => prob::from_f64(*x),
            Weight::Text(s) => {
                let (n, d) = s.split_once('/').unwrap_or((s, "1"));
                let n = n.trim().parse().ok()?;
                let d: num_bigint::BigInt = d.trim().parse().ok()?;
                (d != num_bigint::BigInt::from(0)).then(|| Prob::new(n, d))
            }
        }
    }

    pub fn from_prob(p: &Prob) -> Self {
        let x = prob::to_f64(p);
        if prob::from_f64(x).as_ref() == Some(p) {
            Weight::Number(x)
        } else {
            Weight::Text(format!("{}/{}", p.numer(), p.denom()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionDoc {
    Dirac(String),
    Urn(Vec<String>),
    Cat(BTreeMap<String, Weight>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDoc {
    #[serde(default = "one")]
    pub count: u32,
    /// Slot name to label name.
    pub slots: BTreeMap<String, String>,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisDoc {
    pub weight: Weight,
    pub labels: BTreeMap<String, DistributionDoc>,
    pub entities: Vec<GroupDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDoc {
    pub slot: String,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopyDoc {
    pub participant: usize,
    pub slot: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy: Option<CopyDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetDoc {
    pub participant: usize,
    pub slot: String,
    #[serde(flatten)]
    pub source: SourceDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoveDoc {
    pub participant: usize,
    pub slot: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProduceDoc {
    pub slots: BTreeMap<String, SourceDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EffectDoc {
    Set(SetDoc),
    Remove(RemoveDoc),
    Consume(usize),
    Produce(ProduceDoc),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDoc {
    pub name: String,
    #[serde(default = "unit_rate")]
    pub rate: f64,
    pub participants: Vec<Vec<ConstraintDoc>>,
    #[serde(default)]
    pub effects: Vec<EffectDoc>,
}

fn unit_rate() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDoc {
    pub id: String,
    pub kind: String,
    pub slot: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universe: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fp: f64,
    #[serde(default, skip_serializing_if = "is_zero", rename = "fn")]
    pub fn_: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub horizon: u32,
    pub slots: Vec<String>,
    #[serde(default)]
    pub locations: Vec<String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    /// Single initial hypothesis: its labels...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, DistributionDoc>>,
    /// ...and entities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<GroupDoc>>,
    /// Weighted initial hypotheses, instead of `labels`/`entities`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<HypothesisDoc>>,
    pub schemas: Vec<SchemaDoc>,
    #[serde(default)]
    pub sensors: Vec<SensorDoc>,
    #[serde(default)]
    pub queries: Vec<String>,
}
