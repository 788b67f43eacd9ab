//! Finite-state plants `x(t+1) = f(x(t), u(t))`, `y(t) = g(x(t))`,
//! `v(t) = h(x(t))` with a performance weight `μ` on the values of `h`.

use crate::rational::{self, Rational};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("malformed plant document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> PlantError {
    PlantError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// On-disk plant description. Every table is keyed by symbol label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub f: BTreeMap<String, BTreeMap<String, String>>,
    pub g: BTreeMap<String, String>,
    pub h: BTreeMap<String, RationalText>,
    pub mu: BTreeMap<String, RationalText>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<String>>,
}

/// A rational written either as a JSON number or as a string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RationalText(#[serde(with = "rational::as_str")] pub Rational);

/// A feasible-history window `(y_1..y_j, u_1..u_j)`; index 0 is the most
/// recent pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Snapshot {
    pub outputs: Vec<usize>,
    pub inputs: Vec<usize>,
}

impl Snapshot {
    pub fn new(outputs: Vec<usize>, inputs: Vec<usize>) -> Self {
        assert_eq!(outputs.len(), inputs.len(), "snapshot halves differ in length");
        Self { outputs, inputs }
    }

    pub fn single(y: usize, u: usize) -> Self {
        Self::new(vec![y], vec![u])
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Prepends `(y, u)` as the newest pair, keeping at most `window` pairs.
    pub fn advance(&self, y: usize, u: usize, window: usize) -> Snapshot {
        let keep = window.saturating_sub(1).min(self.len());
        let mut outputs = Vec::with_capacity(keep + 1);
        outputs.push(y);
        outputs.extend_from_slice(&self.outputs[..keep]);
        let mut inputs = Vec::with_capacity(keep + 1);
        inputs.push(u);
        inputs.extend_from_slice(&self.inputs[..keep]);
        Snapshot { outputs, inputs }
    }

    /// Keeps the newest `len` pairs.
    pub fn truncated(&self, len: usize) -> Snapshot {
        let len = len.min(self.len());
        Snapshot {
            outputs: self.outputs[..len].to_vec(),
            inputs: self.inputs[..len].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub x: usize,
    pub u: Option<usize>,
    pub y: usize,
    #[serde(with = "rational::as_str")]
    pub v: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// False when the trace was started outside the declared initial set.
    pub x0_in_initial_set: bool,
}

impl Trace {
    pub fn states(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.x).collect()
    }

    pub fn outputs(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.y).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinitePlant {
    name: String,
    states: Vec<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    next: Vec<usize>,
    sensor: Vec<usize>,
    perf: Vec<Rational>,
    /// `μ(h(x))` per state.
    cost: Vec<Rational>,
    /// The `μ` table on the range of `h`, sorted by value.
    mu_table: Vec<(Rational, Rational)>,
    initial: Vec<usize>,
}

impl FinitePlant {
    /// Builds a plant from index tables. `next[x][u]`, `sensor[x]`, `perf[x]`,
    /// and `mu` must cover every value in `perf`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_tables(
        name: impl Into<String>,
        states: Vec<String>,
        inputs: Vec<String>,
        outputs: Vec<String>,
        next: Vec<Vec<usize>>,
        sensor: Vec<usize>,
        perf: Vec<Rational>,
        mu: Vec<(Rational, Rational)>,
        initial: Option<Vec<usize>>,
    ) -> Result<Self, PlantError> {
        let n = states.len();
        let m = inputs.len();
        let p = outputs.len();
        if n == 0 {
            return Err(invalid("states", "state set is empty"));
        }
        if m == 0 {
            return Err(invalid("inputs", "input alphabet is empty"));
        }
        if p == 0 {
            return Err(invalid("outputs", "output alphabet is empty"));
        }
        check_distinct("states", &states)?;
        check_distinct("inputs", &inputs)?;
        check_distinct("outputs", &outputs)?;
        if next.len() != n {
            return Err(invalid("f", format!("expected {n} rows, got {}", next.len())));
        }
        let mut flat = Vec::with_capacity(n * m);
        for (x, row) in next.iter().enumerate() {
            if row.len() != m {
                return Err(invalid(
                    format!("f.{}", states[x]),
                    format!("non-total dynamics: expected {m} successors, got {}", row.len()),
                ));
            }
            for (u, &succ) in row.iter().enumerate() {
                if succ >= n {
                    return Err(invalid(
                        format!("f.{}.{}", states[x], inputs[u]),
                        format!("successor index {succ} out of range"),
                    ));
                }
                flat.push(succ);
            }
        }
        if sensor.len() != n {
            return Err(invalid("g", "non-total sensor map"));
        }
        if let Some(x) = sensor.iter().position(|&y| y >= p) {
            return Err(invalid(format!("g.{}", states[x]), "output index out of range"));
        }
        if perf.len() != n {
            return Err(invalid("h", "non-total performance map"));
        }
        let mut mu_table: BTreeMap<Rational, Rational> = BTreeMap::new();
        for (v, weight) in mu {
            if mu_table.insert(v.clone(), weight).is_some() {
                return Err(invalid("mu", format!("duplicate entry for value {}", rational::format(&v))));
            }
        }
        let mut cost = Vec::with_capacity(n);
        for (x, v) in perf.iter().enumerate() {
            match mu_table.get(v) {
                Some(weight) => cost.push(weight.clone()),
                None => {
                    return Err(invalid(
                        "mu",
                        format!(
                            "no weight for value {} produced by h({})",
                            rational::format(v),
                            states[x]
                        ),
                    ))
                }
            }
        }
        let initial = match initial {
            None => (0..n).collect(),
            Some(list) => {
                if list.is_empty() {
                    return Err(invalid("initial_states", "initial state set is empty"));
                }
                if let Some(&x) = list.iter().find(|&&x| x >= n) {
                    return Err(invalid("initial_states", format!("state index {x} out of range")));
                }
                let set: BTreeSet<usize> = list.into_iter().collect();
                set.into_iter().collect()
            }
        };
        Ok(Self {
            name: name.into(),
            states,
            inputs,
            outputs,
            next: flat,
            sensor,
            perf,
            cost,
            mu_table: mu_table.into_iter().collect(),
            initial,
        })
    }

    pub fn from_document(doc: PlantDocument) -> Result<Self, PlantError> {
        let state_ix = index_of("states", &doc.states);
        let input_ix = index_of("inputs", &doc.inputs);
        let output_ix = index_of("outputs", &doc.outputs);
        check_distinct("states", &doc.states)?;
        check_distinct("inputs", &doc.inputs)?;
        check_distinct("outputs", &doc.outputs)?;

        for key in doc.f.keys() {
            state_ix(key, &format!("f.{key}"))?;
        }
        let mut next = Vec::with_capacity(doc.states.len());
        for x in &doc.states {
            let row = doc
                .f
                .get(x)
                .ok_or_else(|| invalid(format!("f.{x}"), "non-total dynamics: state has no transitions"))?;
            for key in row.keys() {
                input_ix(key, &format!("f.{x}.{key}"))?;
            }
            let mut succ = Vec::with_capacity(doc.inputs.len());
            for u in &doc.inputs {
                let target = row
                    .get(u)
                    .ok_or_else(|| invalid(format!("f.{x}.{u}"), "non-total dynamics: missing transition"))?;
                succ.push(state_ix(target, &format!("f.{x}.{u}"))?);
            }
            next.push(succ);
        }

        for key in doc.g.keys() {
            state_ix(key, &format!("g.{key}"))?;
        }
        let mut sensor = Vec::with_capacity(doc.states.len());
        for x in &doc.states {
            let y = doc
                .g
                .get(x)
                .ok_or_else(|| invalid(format!("g.{x}"), "non-total sensor map"))?;
            sensor.push(output_ix(y, &format!("g.{x}"))?);
        }

        for key in doc.h.keys() {
            state_ix(key, &format!("h.{key}"))?;
        }
        let mut perf = Vec::with_capacity(doc.states.len());
        for x in &doc.states {
            let v = doc
                .h
                .get(x)
                .ok_or_else(|| invalid(format!("h.{x}"), "non-total performance map"))?;
            perf.push(v.0.clone());
        }

        let mut mu = Vec::with_capacity(doc.mu.len());
        for (key, weight) in &doc.mu {
            let v = rational::parse(key)
                .ok_or_else(|| invalid(format!("mu.{key}"), "key is not a rational value"))?;
            mu.push((v, weight.0.clone()));
        }

        let initial = match &doc.initial_states {
            None => None,
            Some(list) => Some(
                list.iter()
                    .map(|x| state_ix(x, "initial_states"))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        Self::from_tables(
            doc.name.clone().unwrap_or_else(|| "plant".to_string()),
            doc.states.clone(),
            doc.inputs.clone(),
            doc.outputs.clone(),
            next,
            sensor,
            perf,
            mu,
            initial,
        )
    }

    pub fn to_document(&self) -> PlantDocument {
        let mut f = BTreeMap::new();
        let mut g = BTreeMap::new();
        let mut h = BTreeMap::new();
        for x in 0..self.num_states() {
            let row = (0..self.num_inputs())
                .map(|u| (self.inputs[u].clone(), self.states[self.step(x, u)].clone()))
                .collect();
            f.insert(self.states[x].clone(), row);
            g.insert(self.states[x].clone(), self.outputs[self.sensor[x]].clone());
            h.insert(self.states[x].clone(), RationalText(self.perf[x].clone()));
        }
        let mu = self
            .mu_table
            .iter()
            .map(|(v, w)| (rational::format(v), RationalText(w.clone())))
            .collect();
        let initial_states = if self.initial.len() == self.num_states() {
            None
        } else {
            Some(self.initial.iter().map(|&x| self.states[x].clone()).collect())
        };
        PlantDocument {
            name: Some(self.name.clone()),
            states: self.states.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            f,
            g,
            h,
            mu,
            initial_states,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("plant serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn state_labels(&self) -> &[String] {
        &self.states
    }

    pub fn input_labels(&self) -> &[String] {
        &self.inputs
    }

    pub fn output_labels(&self) -> &[String] {
        &self.outputs
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn input_index(&self, label: &str) -> Option<usize> {
        self.inputs.iter().position(|s| s == label)
    }

    pub fn output_index(&self, label: &str) -> Option<usize> {
        self.outputs.iter().position(|s| s == label)
    }

    pub fn initial_states(&self) -> &[usize] {
        &self.initial
    }

    pub fn step(&self, x: usize, u: usize) -> usize {
        self.next[x * self.inputs.len() + u]
    }

    pub fn output(&self, x: usize) -> usize {
        self.sensor[x]
    }

    pub fn perf(&self, x: usize) -> &Rational {
        &self.perf[x]
    }

    /// `μ(h(x))`.
    pub fn cost(&self, x: usize) -> &Rational {
        &self.cost[x]
    }

    pub fn mu(&self, v: &Rational) -> Option<&Rational> {
        self.mu_table
            .binary_search_by(|(key, _)| key.cmp(v))
            .ok()
            .map(|i| &self.mu_table[i].1)
    }

    pub fn mu_table(&self) -> &[(Rational, Rational)] {
        &self.mu_table
    }

    /// Runs the dynamics from `x0`. Inputs must be in range.
    pub fn simulate(&self, x0: usize, inputs: &[usize]) -> Trace {
        assert!(x0 < self.num_states(), "initial state out of range");
        let mut records = Vec::with_capacity(inputs.len() + 1);
        let mut x = x0;
        for (t, &u) in inputs.iter().enumerate() {
            assert!(u < self.num_inputs(), "input out of range");
            records.push(self.record(t, x, Some(u)));
            x = self.step(x, u);
        }
        records.push(self.record(inputs.len(), x, None));
        Trace {
            records,
            x0_in_initial_set: self.initial.binary_search(&x0).is_ok(),
        }
    }

    fn record(&self, t: usize, x: usize, u: Option<usize>) -> TraceRecord {
        TraceRecord {
            t,
            x,
            u,
            y: self.sensor[x],
            v: self.perf[x].clone(),
        }
    }

    /// The states `X_o` that can generate the window and their forward image
    /// `X_q` at the time of the newest pair. Both are empty iff the window is
    /// infeasible.
    pub fn snapshot_state_set(&self, snapshot: &Snapshot) -> (Vec<usize>, Vec<usize>) {
        let mut origins = Vec::new();
        let mut image = BTreeSet::new();
        'candidates: for x0 in 0..self.num_states() {
            let mut x = x0;
            for k in (0..snapshot.len()).rev() {
                if self.sensor[x] != snapshot.outputs[k] {
                    continue 'candidates;
                }
                x = self.step(x, snapshot.inputs[k]);
            }
            origins.push(x0);
            image.insert(x);
        }
        (origins, image.into_iter().collect())
    }

    /// `g(X)` for a state subset, sorted.
    pub fn output_set(&self, states: &[usize]) -> Vec<usize> {
        let set: BTreeSet<usize> = states.iter().map(|&x| self.sensor[x]).collect();
        set.into_iter().collect()
    }

    pub fn snapshot_label(&self, snapshot: &Snapshot) -> String {
        let ys: Vec<&str> = snapshot.outputs.iter().map(|&y| self.outputs[y].as_str()).collect();
        let us: Vec<&str> = snapshot.inputs.iter().map(|&u| self.inputs[u].as_str()).collect();
        format!("({}|{})", ys.join(","), us.join(","))
    }
}

impl std::str::FromStr for FinitePlant {
    type Err = PlantError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let doc: PlantDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }
}

pub fn parse_plant(text: &str) -> Result<FinitePlant, PlantError> {
    text.parse()
}

fn check_distinct(field: &str, labels: &[String]) -> Result<(), PlantError> {
    let mut seen = BTreeSet::new();
    for label in labels {
        if !seen.insert(label) {
            return Err(invalid(field, format!("duplicate label `{label}`")));
        }
    }
    Ok(())
}

fn index_of<'a>(
    alphabet: &'a str,
    labels: &'a [String],
) -> impl Fn(&str, &str) -> Result<usize, PlantError> + 'a {
    move |label, field| {
        labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| invalid(field, format!("unknown symbol `{label}` (not in {alphabet})")))
    }
}

/// Plants shipped with the toolkit.
pub mod bundled {
    use super::FinitePlant;

    pub const EX1: &str = include_str!("../plants/ex1.json");
    pub const EX2: &str = include_str!("../plants/ex2.json");
    pub const EX3: &str = include_str!("../plants/ex3.json");

    pub fn names() -> &'static [&'static str] {
        &["EX1", "EX2", "EX3"]
    }

    pub fn source(name: &str) -> Option<&'static str> {
        match name.to_ascii_uppercase().as_str() {
            "EX1" => Some(EX1),
            "EX2" => Some(EX2),
            "EX3" => Some(EX3),
            _ => None,
        }
    }

    pub fn load(name: &str) -> Option<FinitePlant> {
        source(name).map(|text| text.parse().expect("bundled plant is valid"))
    }

    pub fn ex1() -> FinitePlant {
        load("EX1").unwrap()
    }

    pub fn ex2() -> FinitePlant {
        load("EX2").unwrap()
    }

    pub fn ex3() -> FinitePlant {
        load("EX3").unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    fn labels(plant: &FinitePlant, xs: &[usize]) -> Vec<String> {
        xs.iter().map(|&x| plant.state_labels()[x].clone()).collect()
    }

    #[test]
    fn bundled_ex1_shape() {
        let plant = bundled::ex1();
        assert_eq!((plant.num_states(), plant.num_inputs(), plant.num_outputs()), (4, 2, 2));
        assert_eq!(plant.initial_states(), &[0, 1, 2, 3]);
        assert_eq!(plant.cost(3), &int(3));
    }

    #[test]
    fn document_round_trip() {
        for name in bundled::names() {
            let plant = bundled::load(name).unwrap();
            let again: FinitePlant = plant.to_json().parse().unwrap();
            assert_eq!(plant, again);
        }
    }

    #[test]
    fn simulate_examples() {
        let plant = bundled::ex1();
        let a = plant.input_index("a").unwrap();
        let b = plant.input_index("b").unwrap();
        let trace = plant.simulate(0, &[a, a]);
        assert_eq!(labels(&plant, &trace.states()), ["0", "1", "2"]);
        let ys: Vec<&str> = trace.outputs().iter().map(|&y| plant.output_labels()[y].as_str()).collect();
        assert_eq!(ys, ["lo", "lo", "hi"]);

        let trace = plant.simulate(3, &[b, b, b, b]);
        assert_eq!(labels(&plant, &trace.states()), ["3", "2", "1", "0", "0"]);

        let trace = plant.simulate(2, &[]);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].u, None);
        assert_eq!(trace.records[0].v, int(2));
    }

    #[test]
    fn simulate_flags_start_outside_initial_set() {
        let mut doc = bundled::ex1().to_document();
        doc.initial_states = Some(vec!["0".into()]);
        let plant = FinitePlant::from_document(doc).unwrap();
        assert!(plant.simulate(0, &[]).x0_in_initial_set);
        assert!(!plant.simulate(2, &[]).x0_in_initial_set);
    }

    #[test]
    fn snapshot_state_set_examples() {
        let plant = bundled::ex1();
        let lo = plant.output_index("lo").unwrap();
        let hi = plant.output_index("hi").unwrap();
        let a = plant.input_index("a").unwrap();
        let (xo, xq) = plant.snapshot_state_set(&Snapshot::single(lo, a));
        assert_eq!(labels(&plant, &xo), ["0", "1"]);
        assert_eq!(labels(&plant, &xq), ["1", "2"]);
        let (xo, xq) = plant.snapshot_state_set(&Snapshot::single(hi, a));
        assert_eq!(labels(&plant, &xo), ["2", "3"]);
        assert_eq!(labels(&plant, &xq), ["3"]);

        let plant = bundled::ex2();
        let big_a = plant.output_index("A").unwrap();
        let big_b = plant.output_index("B").unwrap();
        let a = plant.input_index("a").unwrap();
        // newest A after older B
        let (xo, xq) = plant.snapshot_state_set(&Snapshot::new(vec![big_a, big_b], vec![a, a]));
        assert!(xo.is_empty() && xq.is_empty());
    }

    #[test]
    fn rejects_partial_dynamics() {
        let mut doc = bundled::ex1().to_document();
        doc.f.get_mut("3").unwrap().remove("b");
        let err = FinitePlant::from_document(doc).unwrap_err();
        assert!(err.to_string().contains("f.3.b"), "{err}");
        assert!(err.to_string().contains("non-total"), "{err}");
    }

    #[test]
    fn rejects_missing_mu_value() {
        let mut doc = bundled::ex1().to_document();
        doc.mu.remove("2");
        let err = FinitePlant::from_document(doc).unwrap_err();
        assert!(err.to_string().starts_with("mu:"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_symbols() {
        let text = bundled::EX1.replacen("\"states\"", "\"extra\": 1, \"states\"", 1);
        let err = parse_plant(&text).unwrap_err();
        assert!(matches!(err, PlantError::Syntax(_)));
        assert!(err.to_string().contains("line"), "{err}");

        let mut doc = bundled::ex1().to_document();
        doc.g.insert("0".into(), "mid".into());
        let err = FinitePlant::from_document(doc).unwrap_err();
        assert!(err.to_string().contains("g.0"), "{err}");

        let mut doc = bundled::ex1().to_document();
        doc.initial_states = Some(vec![]);
        assert!(FinitePlant::from_document(doc).is_err());
    }

    #[test]
    fn snapshot_advance_slides_window() {
        let s = Snapshot::new(vec![1, 0], vec![0, 1]);
        assert_eq!(s.advance(0, 0, 2), Snapshot::new(vec![0, 1], vec![0, 0]));
        assert_eq!(s.advance(0, 0, 3), Snapshot::new(vec![0, 1, 0], vec![0, 0, 1]));
        assert_eq!(s.truncated(1), Snapshot::single(1, 0));
    }
}
