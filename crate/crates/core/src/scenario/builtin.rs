//! The two built-in scenarios: a forklift warehouse and an office with a
//! shared printer and coffee machine.

use std::collections::{BTreeMap, BTreeSet};

use crate::action::{ActionSchema, Constraint, Effect, Source};
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::filter::{LiftedBeliefState, Query};
use crate::observation::SensorSpec;
use crate::state::LiftedState;
use crate::value::{Slot, Value};

use super::Scenario;

pub const WAREHOUSE_LOCATIONS: [&str; 5] = ["parking", "service", "stor1", "stor2", "stor3"];
pub const WAREHOUSE_EDGES: [(&str, &str); 5] = [
    ("parking", "stor2"),
    ("stor2", "stor1"),
    ("stor2", "stor3"),
    ("service", "stor2"),
    ("parking", "stor3"),
];
pub const OFFICE_LOCATIONS: [&str; 3] = ["kitchen", "office", "printroom"];
pub const OFFICE_EDGES: [(&str, &str); 2] = [("kitchen", "office"), ("office", "printroom")];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OfficeItems {
    /// Paper, printer and coffee machine.
    Full,
    /// Paper and printer only.
    Reduced,
}

fn ids(prefix: &str, n: u32) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn schema(name: impl Into<String>, participants: Vec<Vec<Constraint>>, effects: Vec<Effect>) -> ActionSchema {
    ActionSchema::new(name, participants, effects, 1.0).expect("built-in schema is valid")
}

fn set(participant: usize, slot: &str, v: &str) -> Effect {
    Effect::Set { participant, slot: Slot::new(slot), source: Source::Value(Value::new(v)) }
}

fn edges(list: &[(&str, &str)]) -> Vec<(Value, Value)> {
    list.iter().map(|(a, b)| (Value::new(a), Value::new(b))).collect()
}

/// Hops from each location towards parking along a shortest path.
const WAREHOUSE_RETURN: [(&str, &str); 4] =
    [("service", "stor2"), ("stor1", "stor2"), ("stor2", "parking"), ("stor3", "parking")];

/// Forklifts parked at night, each with an unknown identity drawn from an
/// urn. Every location has an anonymous presence sensor; the service
/// station identifies the forklifts being refueled.
///
/// With `shift = 0` forklifts walk at random forever. Otherwise every
/// forklift carries an `hour` slot counting `0..shift`: during the last two
/// hours of a shift all forklifts head back to parking, so they are parked
/// together whenever the time step is a multiple of `shift`.
pub fn warehouse(n: u32, horizon: u32, shift: u32) -> Result<Scenario> {
    if n == 0 {
        return Err(Error::validation("n", "at least one forklift is needed"));
    }
    if shift != 0 && shift < 3 {
        return Err(Error::validation("shift", "a shift lasts at least 3 steps"));
    }
    let names = ids("fl", n);
    let mut b = LiftedState::builder()
        .label("ID", Distribution::urn(names.iter().map(String::as_str))?)
        .label("P", Distribution::dirac("parking"));
    b = if shift == 0 {
        b.group(n, &[("loc", "P"), ("ID", "ID")])
    } else {
        b.label("H", Distribution::dirac("h0")).group(n, &[("loc", "P"), ("ID", "ID"), ("hour", "H")])
    };
    let initial = b.build()?;

    let mut schemas = Vec::new();
    let hours: Vec<Option<u32>> = if shift == 0 { vec![None] } else { (0..shift).map(Some).collect() };
    for h in hours {
        let at = |l: &str| {
            let mut cs = vec![Constraint::eq("loc", l)];
            if let Some(h) = h {
                cs.push(Constraint::eq("hour", format!("h{h}")));
            }
            vec![cs]
        };
        let tick = |mut effects: Vec<Effect>| {
            if let Some(h) = h {
                effects.push(set(0, "hour", &format!("h{}", (h + 1) % shift)));
            }
            effects
        };
        let suffix = h.map(|h| format!("_h{h}")).unwrap_or_default();
        let returning = h.is_some_and(|h| h + 2 >= shift);
        for l in WAREHOUSE_LOCATIONS {
            if returning && l != "parking" {
                continue;
            }
            let name = if l == "service" { format!("refuel{suffix}") } else { format!("stay_{l}{suffix}") };
            schemas.push(schema(name, at(l), tick(vec![])));
        }
        let moves: Vec<(&str, &str)> = if returning {
            WAREHOUSE_RETURN.to_vec()
        } else {
            WAREHOUSE_EDGES.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
        };
        for (from, to) in moves {
            schemas.push(schema(format!("move_{from}_{to}{suffix}"), at(from), tick(vec![set(0, "loc", to)])));
        }
    }
    let mut sensors: BTreeMap<String, SensorSpec> = WAREHOUSE_LOCATIONS
        .iter()
        .map(|l| (format!("p_{l}"), SensorSpec::presence("loc", *l)))
        .collect();
    sensors.insert(
        "id_service".into(),
        SensorSpec::identify("loc", "service", "ID").with_universe(names.iter().map(String::as_str)),
    );
    let mut slots: BTreeSet<Slot> = ["loc", "ID"].into_iter().map(Slot::new).collect();
    if shift != 0 {
        slots.insert(Slot::new("hour"));
    }
    Ok(Scenario {
        name: "warehouse".into(),
        slots,
        locations: WAREHOUSE_LOCATIONS.iter().map(Value::new).collect(),
        edges: edges(&WAREHOUSE_EDGES),
        initial: LiftedBeliefState::point(initial),
        schemas,
        sensors,
        queries: vec![Query::new("ID", "fl1", "loc")],
        horizon,
    })
}

fn person(loc: Option<&str>, hold: Option<&[&str]>) -> Vec<Constraint> {
    let mut cs = vec![Constraint::eq("kind", "person")];
    if let Some(l) = loc {
        cs.push(Constraint::eq("loc", l));
    }
    match hold {
        Some([one]) => cs.push(Constraint::eq("hold", *one)),
        Some(many) => cs.push(Constraint::one_of("hold", many.iter().copied())),
        None => {}
    }
    cs
}

/// Persons start in the office. Paper is fetched in the office, loaded into
/// the printer and printed; the person printing authenticates at the printer
/// and is identified while the job runs. The document is then collected and
/// delivered back to the office. With full items the kitchen also offers
/// water and coffee for a machine that brews cups.
pub fn office(n: u32, items: OfficeItems, horizon: u32) -> Result<Scenario> {
    if n == 0 {
        return Err(Error::validation("n", "at least one person is needed"));
    }
    let names = ids("p", n);
    let mut b = LiftedState::builder()
        .label("ID", Distribution::urn(names.iter().map(String::as_str))?)
        .label("Person", Distribution::dirac("person"))
        .label("Office", Distribution::dirac("office"))
        .label("None", Distribution::dirac("none"))
        .label("Printer", Distribution::dirac("printer"))
        .label("Empty", Distribution::dirac("empty"))
        .group(n, &[("kind", "Person"), ("loc", "Office"), ("hold", "None"), ("ID", "ID")])
        .group(1, &[("kind", "Printer"), ("paper", "Empty")]);
    if items == OfficeItems::Full {
        b = b
            .label("Machine", Distribution::dirac("machine"))
            .group(1, &[("kind", "Machine"), ("water", "Empty"), ("coffee", "Empty")]);
    }
    let initial = b.build()?;

    let free = ["none", "paper", "document", "water", "coffee", "cup"];
    let movable: &[&str] = match items {
        OfficeItems::Full => &free,
        OfficeItems::Reduced => &free[..3],
    };
    let mut schemas = Vec::new();
    for l in OFFICE_LOCATIONS {
        schemas.push(schema(format!("stay_{l}"), vec![person(Some(l), Some(movable))], vec![]));
    }
    for (a, b) in OFFICE_EDGES {
        for (from, to) in [(a, b), (b, a)] {
            schemas.push(schema(
                format!("move_{from}_{to}"),
                vec![person(Some(from), Some(movable))],
                vec![set(0, "loc", to)],
            ));
        }
    }
    let printer = |paper: &str| vec![Constraint::eq("kind", "printer"), Constraint::eq("paper", paper)];
    schemas.extend([
        schema("pickup_paper", vec![person(Some("office"), Some(&["none"]))], vec![set(0, "hold", "paper")]),
        schema(
            "load_printer",
            vec![person(Some("printroom"), Some(&["paper"])), printer("empty")],
            vec![set(0, "hold", "none"), set(1, "paper", "full")],
        ),
        schema(
            "print",
            vec![person(Some("printroom"), Some(&["none"])), printer("full")],
            vec![set(0, "hold", "job"), set(1, "paper", "empty")],
        ),
        schema("collect", vec![person(None, Some(&["job"]))], vec![set(0, "hold", "document")]),
        schema("deliver", vec![person(Some("office"), Some(&["document"]))], vec![set(0, "hold", "none")]),
        schema("putdown", vec![person(None, Some(&movable[1..]))], vec![set(0, "hold", "none")]),
        schema("printer_idle", vec![vec![Constraint::eq("kind", "printer")]], vec![]),
    ]);
    if items == OfficeItems::Full {
        let machine = |slot: &str, v: &str| vec![Constraint::eq("kind", "machine"), Constraint::eq(slot, v)];
        schemas.extend([
            schema("pickup_water", vec![person(Some("kitchen"), Some(&["none"]))], vec![set(0, "hold", "water")]),
            schema("pickup_coffee", vec![person(Some("kitchen"), Some(&["none"]))], vec![set(0, "hold", "coffee")]),
            schema(
                "fill_water",
                vec![person(Some("kitchen"), Some(&["water"])), machine("water", "empty")],
                vec![set(0, "hold", "none"), set(1, "water", "full")],
            ),
            schema(
                "fill_coffee",
                vec![person(Some("kitchen"), Some(&["coffee"])), machine("coffee", "empty")],
                vec![set(0, "hold", "none"), set(1, "coffee", "full")],
            ),
            schema(
                "brew",
                vec![
                    person(Some("kitchen"), Some(&["none"])),
                    vec![
                        Constraint::eq("kind", "machine"),
                        Constraint::eq("water", "full"),
                        Constraint::eq("coffee", "full"),
                    ],
                ],
                vec![set(0, "hold", "cup"), set(1, "water", "empty"), set(1, "coffee", "empty")],
            ),
            schema("drink", vec![person(None, Some(&["cup"]))], vec![set(0, "hold", "none")]),
            schema("machine_idle", vec![vec![Constraint::eq("kind", "machine")]], vec![]),
        ]);
    }

    let mut sensors: BTreeMap<String, SensorSpec> = OFFICE_LOCATIONS
        .iter()
        .map(|l| (format!("p_{l}"), SensorSpec::presence("loc", *l)))
        .collect();
    sensors.insert(
        "id_printer".into(),
        SensorSpec::identify("hold", "job", "ID").with_universe(names.iter().map(String::as_str)),
    );
    let mut slots: BTreeSet<Slot> = ["kind", "loc", "hold", "ID", "paper"].into_iter().map(Slot::new).collect();
    if items == OfficeItems::Full {
        slots.extend(["water", "coffee"].into_iter().map(Slot::new));
    }
    Ok(Scenario {
        name: "office".into(),
        slots,
        locations: OFFICE_LOCATIONS.iter().map(Value::new).collect(),
        edges: edges(&OFFICE_EDGES),
        initial: LiftedBeliefState::point(initial),
        schemas,
        sensors,
        queries: vec![Query::new("ID", "p1", "hold")],
        horizon,
    })
}

/// Looks up a built-in scenario by name. Parameters: `n` (entity count),
/// `horizon`, `fp` and `fn` (sensor noise, default 0); for the warehouse
/// `shift` (steps between nights, 0 for none) and for the office `items`
/// (`full` or `reduced`).
pub fn builtin(name: &str, params: &BTreeMap<String, String>) -> Result<Scenario> {
    let allowed: &[&str] = match name {
        "warehouse" => &["n", "horizon", "shift", "fp", "fn"],
        "office" => &["n", "horizon", "fp", "fn", "items"],
        _ => return Err(Error::UnknownScenario(name.to_string())),
    };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::validation(k.clone(), format!("unknown parameter for `{name}`")));
    }
    fn get<T: std::str::FromStr>(params: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
        match params.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::validation(key, format!("cannot parse `{v}`"))),
        }
    }
    let mut sc = match name {
        "warehouse" => warehouse(get(params, "n", 10)?, get(params, "horizon", 33)?, get(params, "shift", 10)?)?,
        _ => {
            let items = match params.get("items").map(String::as_str) {
                None | Some("full") => OfficeItems::Full,
                Some("reduced") => OfficeItems::Reduced,
                Some(other) => return Err(Error::validation("items", format!("expected full or reduced, got `{other}`"))),
            };
            office(get(params, "n", 3)?, items, get(params, "horizon", 20)?)?
        }
    };
    let fp: f64 = get(params, "fp", 0.0)?;
    let fn_: f64 = get(params, "fn", 0.0)?;
    if fp != 0.0 || fn_ != 0.0 {
        for (id, s) in std::mem::take(&mut sc.sensors) {
            let s = s.with_noise(fp, fn_).map_err(|e| Error::validation(id.clone(), e.to_string()))?;
            sc.sensors.insert(id, s);
        }
    }
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_params() -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    #[test]
    fn warehouse_defaults() {
        let sc = builtin("warehouse", &no_params()).unwrap();
        assert_eq!(sc.locations.len(), 5);
        assert_eq!(sc.horizon, 33);
        let (s, _) = sc.initial.hypotheses().iter().next().unwrap();
        assert_eq!(s.entity_count(), 10);
        assert_eq!(sc.sensors.len(), 6);
    }

    fn moved(sc: &Scenario) -> Vec<(Value, Value)> {
        let loc = Slot::new("loc");
        sc.schemas
            .iter()
            .filter_map(|a| {
                let from = a.participants()[0].iter().find(|c| c.slot == loc)?;
                let to = a.effects().iter().find_map(|e| match e {
                    Effect::Set { slot, source: Source::Value(v), .. } if *slot == loc => Some(v.clone()),
                    _ => None,
                })?;
                match &from.op {
                    crate::action::Op::Eq(f) => Some((f.clone(), to)),
                    _ => None,
                }
            })
            .collect()
    }

    #[test]
    fn moves_follow_edges() {
        for sc in [warehouse(3, 5, 0).unwrap(), warehouse(3, 5, 10).unwrap(), office(2, OfficeItems::Full, 5).unwrap()] {
            let m = moved(&sc);
            assert!(!m.is_empty());
            for (a, b) in m {
                assert!(sc.adjacent(&a, &b), "{a} -> {b}");
            }
        }
    }

    #[test]
    fn shifts_end_at_parking() {
        let sc = warehouse(4, 30, 10).unwrap();
        for seed in 0..5 {
            let t = crate::scenario::sample_trace(&sc, seed, 30).unwrap();
            for step in t.steps.iter().filter(|s| s.t % 10 == 0) {
                let truth = step.truth.as_ref().unwrap();
                assert!(truth.entities().iter().all(|e| e.get(&Slot::new("loc")) == Some(&Value::new("parking"))));
            }
        }
    }

    #[test]
    fn office_defaults() {
        let sc = builtin("office", &no_params()).unwrap();
        let (s, _) = sc.initial.hypotheses().iter().next().unwrap();
        // three persons, printer, machine
        assert_eq!(s.entity_count(), 5);
        assert!(sc.sensors.contains_key("id_printer"));
    }

    #[test]
    fn bad_names_and_params() {
        assert!(matches!(builtin("zoo", &no_params()), Err(Error::UnknownScenario(_))));
        let p = [("size".to_string(), "3".to_string())].into_iter().collect();
        assert!(matches!(builtin("warehouse", &p), Err(Error::Validation { .. })));
        let p = [("n".to_string(), "x".to_string())].into_iter().collect();
        assert!(builtin("office", &p).is_err());
    }

    #[test]
    fn noise_params_apply_to_every_sensor() {
        let p = [("fn".to_string(), "0.1".to_string()), ("fp".to_string(), "0.05".to_string())]
            .into_iter()
            .collect();
        let sc = builtin("warehouse", &p).unwrap();
        assert!(sc.sensors.values().all(|s| s.false_negative() == 0.1 && s.false_positive() == 0.05));
    }
}
