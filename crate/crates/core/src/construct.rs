//! Window-based DFM abstractions `M_i` of a finite plant.
//!
//! States of `M_i` are feasible input/output windows of length at most `i`
//! plus the root `q_o` and the impossible state `q_∅`. Each state carries the
//! plant states `X(q)` consistent with its window and their outputs `Y(q)`.
//! The predicted output `g_i(q)` is drawn from `Y(q)`, and `h_i(q)` is the
//! worst-case performance value over `X(q)`.

use crate::plant::{FinitePlant, Snapshot};
use crate::rational::{self, Rational};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

pub type StateId = usize;

/// `q_o`, the fixed initial state.
pub const ROOT: StateId = 0;
/// `q_∅`, reached on input/output pairs the plant cannot produce.
pub const IMPOSSIBLE: StateId = 1;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("nested output policy needs the level-{expected} abstraction, got level {got}")]
    LevelMismatch { expected: usize, got: usize },
    #[error("nested output policy infeasible at state {label}: inherited output `{inherited}` is not in Y(q) = {{{outputs}}}")]
    NestingInfeasible {
        state: StateId,
        label: String,
        inherited: String,
        outputs: String,
    },
    #[error("state {0} is not a state of this abstraction")]
    UnknownState(StateId),
    #[error("input {input} or output {output} outside the abstraction alphabets")]
    UnknownSymbol { input: usize, output: usize },
    #[error("malformed abstraction document: {0}")]
    Document(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "snapshot", rename_all = "snake_case")]
pub enum StateKind {
    Root,
    Impossible,
    Partial(Snapshot),
    Final(Snapshot),
}

impl StateKind {
    pub fn snapshot(&self) -> Option<&Snapshot> {
        match self {
            StateKind::Partial(s) | StateKind::Final(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractState {
    pub kind: StateKind,
    /// `X(q)`, sorted plant state indices.
    pub states: Vec<usize>,
    /// `Y(q) = g(X(q))`, sorted.
    pub outputs: Vec<usize>,
    /// `g_i(q)`.
    pub prediction: usize,
    /// `h_i(q)`.
    #[serde(with = "rational::as_str")]
    pub perf: Rational,
    /// `μ(h_i(q))`.
    #[serde(with = "rational::as_str")]
    pub perf_weight: Rational,
}

impl AbstractState {
    pub fn is_ambiguous(&self) -> bool {
        self.outputs.len() > 1
    }
}

#[derive(Clone, Copy, Debug)]
pub enum OutputPolicy<'a> {
    /// Smallest output index in `Y(q)`.
    Lexicographic,
    /// Inherit `g_{i-1}` of the one-pair-shorter window wherever `|Y(q)| > 1`.
    NestedWith(&'a Abstraction),
}

/// Result of one `M_i` step: the successor and the outputs emitted by the
/// state the step started from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub next: StateId,
    pub prediction: usize,
    pub perf: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Abstraction {
    window: usize,
    plant: String,
    plant_states: Vec<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    states: Vec<AbstractState>,
    delta: Vec<StateId>,
    index: HashMap<Snapshot, StateId>,
}

pub fn build_abstraction(
    plant: &FinitePlant,
    window: usize,
    policy: OutputPolicy<'_>,
) -> Result<Abstraction, ConstructError> {
    if window == 0 {
        return Err(ConstructError::ZeroWindow);
    }
    if let OutputPolicy::NestedWith(prev) = policy {
        if prev.window + 1 != window {
            return Err(ConstructError::LevelMismatch {
                expected: window - 1,
                got: prev.window,
            });
        }
    }
    let m = plant.num_inputs();
    let p = plant.num_outputs();
    let all: Vec<usize> = (0..plant.num_states()).collect();

    let mut kinds = vec![StateKind::Root, StateKind::Impossible];
    let mut sets = vec![all.clone(), Vec::new()];
    let mut index: HashMap<Snapshot, StateId> = HashMap::new();
    let mut delta = Vec::new();

    let mut q = 0;
    while q < kinds.len() {
        for u in 0..m {
            for y in 0..p {
                let candidate = match &kinds[q] {
                    StateKind::Impossible => None,
                    StateKind::Root => Some(Snapshot::single(y, u)),
                    StateKind::Partial(s) | StateKind::Final(s) => Some(s.advance(y, u, window)),
                };
                let target = match candidate {
                    None => IMPOSSIBLE,
                    Some(snapshot) => match index.get(&snapshot) {
                        Some(&id) => id,
                        None => {
                            let (origins, image) = plant.snapshot_state_set(&snapshot);
                            if origins.is_empty() {
                                IMPOSSIBLE
                            } else {
                                let id = kinds.len();
                                let kind = if snapshot.len() == window {
                                    StateKind::Final(snapshot.clone())
                                } else {
                                    StateKind::Partial(snapshot.clone())
                                };
                                index.insert(snapshot, id);
                                kinds.push(kind);
                                sets.push(image);
                                id
                            }
                        }
                    },
                };
                delta.push(target);
            }
        }
        q += 1;
    }

    let mut states = Vec::with_capacity(kinds.len());
    for (id, (kind, xs)) in kinds.into_iter().zip(sets).enumerate() {
        let outputs = plant.output_set(&xs);
        let witness = if id == IMPOSSIBLE {
            extremal_state(plant, &all, |a, b| a < b)
        } else {
            extremal_state(plant, &xs, |a, b| a > b)
        };
        states.push(AbstractState {
            prediction: outputs.first().copied().unwrap_or(0),
            perf: plant.perf(witness).clone(),
            perf_weight: plant.cost(witness).clone(),
            kind,
            states: xs,
            outputs,
        });
    }

    let mut abstraction = Abstraction {
        window,
        plant: plant.name().to_string(),
        plant_states: plant.state_labels().to_vec(),
        inputs: plant.input_labels().to_vec(),
        outputs: plant.output_labels().to_vec(),
        states,
        delta,
        index,
    };

    if let OutputPolicy::NestedWith(prev) = policy {
        for id in 0..abstraction.states.len() {
            if !abstraction.states[id].is_ambiguous() {
                continue;
            }
            let Some(parent) = abstraction.parent_in(id, prev) else {
                continue;
            };
            let inherited = prev.states[parent].prediction;
            if abstraction.states[id].outputs.binary_search(&inherited).is_err() {
                return Err(ConstructError::NestingInfeasible {
                    state: id,
                    label: abstraction.state_label(id),
                    inherited: abstraction
                        .outputs
                        .get(inherited)
                        .cloned()
                        .unwrap_or_else(|| inherited.to_string()),
                    outputs: abstraction.output_list(&abstraction.states[id].outputs),
                });
            }
            abstraction.states[id].prediction = inherited;
        }
    }
    Ok(abstraction)
}

/// First state (by index) that is strictly better than all earlier ones
/// under `better` applied to `μ(h(x))`.
fn extremal_state(
    plant: &FinitePlant,
    candidates: &[usize],
    better: impl Fn(&Rational, &Rational) -> bool,
) -> usize {
    let mut best = candidates[0];
    for &x in &candidates[1..] {
        if better(plant.cost(x), plant.cost(best)) {
            best = x;
        }
    }
    best
}

impl Abstraction {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn plant_name(&self) -> &str {
        &self.plant
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

    pub fn input_labels(&self) -> &[String] {
        &self.inputs
    }

    pub fn output_labels(&self) -> &[String] {
        &self.outputs
    }

    pub fn plant_state_labels(&self) -> &[String] {
        &self.plant_states
    }

    pub fn states(&self) -> &[AbstractState] {
        &self.states
    }

    pub fn state(&self, q: StateId) -> &AbstractState {
        &self.states[q]
    }

    /// Direct access for building perturbed abstractions in tests and
    /// negative controls; no invariant is re-checked.
    pub fn state_mut(&mut self, q: StateId) -> &mut AbstractState {
        &mut self.states[q]
    }

    /// `f_i(q, u, y)`; panics on out-of-range arguments.
    pub fn next(&self, q: StateId, u: usize, y: usize) -> StateId {
        let m = self.inputs.len();
        let p = self.outputs.len();
        self.delta[(q * m + u) * p + y]
    }

    pub fn step(&self, q: StateId, u: usize, y: usize) -> Result<Step, ConstructError> {
        if q >= self.states.len() {
            return Err(ConstructError::UnknownState(q));
        }
        if u >= self.inputs.len() || y >= self.outputs.len() {
            return Err(ConstructError::UnknownSymbol { input: u, output: y });
        }
        let state = &self.states[q];
        Ok(Step {
            next: self.next(q, u, y),
            prediction: state.prediction,
            perf: state.perf.clone(),
        })
    }

    pub fn find(&self, snapshot: &Snapshot) -> Option<StateId> {
        self.index.get(snapshot).copied()
    }

    /// The state of `shorter` that `q` corresponds to along any run: the
    /// same window with pairs older than `shorter.window()` dropped.
    pub fn parent_in(&self, q: StateId, shorter: &Abstraction) -> Option<StateId> {
        match &self.states[q].kind {
            StateKind::Root => Some(ROOT),
            StateKind::Impossible => None,
            StateKind::Partial(s) | StateKind::Final(s) => shorter.find(&s.truncated(shorter.window)),
        }
    }

    /// `V̂_i`, sorted and deduplicated.
    pub fn output_values(&self) -> Vec<Rational> {
        let mut values: Vec<Rational> = self.states.iter().map(|s| s.perf.clone()).collect();
        values.sort();
        values.dedup();
        values
    }

    pub fn state_label(&self, q: StateId) -> String {
        match &self.states[q].kind {
            StateKind::Root => "q_o".to_string(),
            StateKind::Impossible => "q_empty".to_string(),
            StateKind::Partial(s) | StateKind::Final(s) => {
                let ys: Vec<&str> = s.outputs.iter().map(|&y| self.outputs[y].as_str()).collect();
                let us: Vec<&str> = s.inputs.iter().map(|&u| self.inputs[u].as_str()).collect();
                format!("({}|{})", ys.join(","), us.join(","))
            }
        }
    }

    fn output_list(&self, ys: &[usize]) -> String {
        ys.iter().map(|&y| self.outputs[y].as_str()).collect::<Vec<_>>().join(",")
    }

    fn state_list(&self, xs: &[usize]) -> String {
        xs.iter().map(|&x| self.plant_states[x].as_str()).collect::<Vec<_>>().join(",")
    }

    pub fn to_document(&self) -> AbstractionDocument {
        let m = self.inputs.len();
        let p = self.outputs.len();
        AbstractionDocument {
            window: self.window,
            plant: self.plant.clone(),
            plant_states: self.plant_states.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            states: self.states.clone(),
            transitions: self
                .delta
                .chunks(m * p)
                .map(|row| row.chunks(p).map(|r| r.to_vec()).collect())
                .collect(),
        }
    }

    pub fn from_document(doc: AbstractionDocument) -> Result<Self, ConstructError> {
        let bad = |msg: String| ConstructError::Document(msg);
        let n = doc.states.len();
        let m = doc.inputs.len();
        let p = doc.outputs.len();
        if doc.window == 0 {
            return Err(ConstructError::ZeroWindow);
        }
        if n < 2 || doc.states[ROOT].kind != StateKind::Root || doc.states[IMPOSSIBLE].kind != StateKind::Impossible {
            return Err(bad("states 0 and 1 must be the root and impossible states".into()));
        }
        if doc.transitions.len() != n {
            return Err(bad(format!("expected {n} transition rows, got {}", doc.transitions.len())));
        }
        let mut delta = Vec::with_capacity(n * m * p);
        for (q, row) in doc.transitions.iter().enumerate() {
            if row.len() != m || row.iter().any(|r| r.len() != p) {
                return Err(bad(format!("transition row {q} is not {m}x{p}")));
            }
            for &target in row.iter().flatten() {
                if target >= n {
                    return Err(bad(format!("transition row {q} targets unknown state {target}")));
                }
                delta.push(target);
            }
        }
        let mut index = HashMap::new();
        for (q, state) in doc.states.iter().enumerate() {
            if state.prediction >= p {
                return Err(bad(format!("state {q} predicts unknown output {}", state.prediction)));
            }
            if let Some(s) = state.kind.snapshot() {
                if index.insert(s.clone(), q).is_some() {
                    return Err(bad(format!("state {q} duplicates an earlier window")));
                }
            }
        }
        Ok(Self {
            window: doc.window,
            plant: doc.plant,
            plant_states: doc.plant_states,
            inputs: doc.inputs,
            outputs: doc.outputs,
            states: doc.states,
            delta,
            index,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("abstraction serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ConstructError> {
        let doc: AbstractionDocument =
            serde_json::from_str(text).map_err(|e| ConstructError::Document(e.to_string()))?;
        Self::from_document(doc)
    }

    /// Graphviz rendering; parallel edges between the same pair of states are
    /// merged into one edge listing every `u,y` label.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        writeln!(out, "digraph M{} {{", self.window).unwrap();
        writeln!(out, "  rankdir=LR;").unwrap();
        writeln!(out, "  node [shape=box, fontname=\"monospace\"];").unwrap();
        for (q, state) in self.states.iter().enumerate() {
            let label = format!(
                "{}\\nX={{{}}}\\nY={{{}}}\\ng={} h={}",
                self.state_label(q),
                self.state_list(&state.states),
                self.output_list(&state.outputs),
                self.outputs[state.prediction],
                rational::format(&state.perf)
            );
            let shape = match state.kind {
                StateKind::Root => ", shape=doublecircle",
                StateKind::Impossible => ", style=dashed",
                _ => "",
            };
            writeln!(out, "  s{q} [label=\"{}\"{shape}];", escape(&label)).unwrap();
        }
        for q in 0..self.states.len() {
            let mut grouped: Vec<(StateId, Vec<String>)> = Vec::new();
            for u in 0..self.inputs.len() {
                for y in 0..self.outputs.len() {
                    let target = self.next(q, u, y);
                    let label = format!("{},{}", self.inputs[u], self.outputs[y]);
                    match grouped.iter_mut().find(|(t, _)| *t == target) {
                        Some((_, labels)) => labels.push(label),
                        None => grouped.push((target, vec![label])),
                    }
                }
            }
            for (target, labels) in grouped {
                writeln!(out, "  s{q} -> s{target} [label=\"{}\"];", escape(&labels.join("; "))).unwrap();
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(text: &str) -> String {
    text.replace('"', "\\\"")
}

/// Serialized form of an [`Abstraction`]: `transitions[q][u][y]` is `f_i(q,u,y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractionDocument {
    pub window: usize,
    pub plant: String,
    pub plant_states: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub states: Vec<AbstractState>,
    pub transitions: Vec<Vec<Vec<StateId>>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissibleEntry {
    pub state: StateId,
    pub label: String,
    /// `Y(q)`.
    pub outputs: Vec<String>,
    /// `Y(q)` intersected with `Y` of every ambiguous extension below it.
    pub admissible: Vec<String>,
    pub chosen: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictMember {
    pub level: usize,
    pub state: StateId,
    pub label: String,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelNesting {
    pub level: usize,
    pub ok: bool,
    /// One entry per ambiguous state.
    pub admissible: Vec<AdmissibleEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestingReport {
    pub nested: bool,
    pub levels: Vec<LevelNesting>,
    /// For each infeasible constraint chain, members whose `Y(q)` sets have
    /// an empty common intersection.
    pub conflicts: Vec<Vec<ConflictMember>>,
}

#[derive(Clone, Debug)]
pub struct NestedSequence {
    pub levels: Vec<Abstraction>,
    pub report: NestingReport,
}

impl NestedSequence {
    pub fn nested(&self) -> bool {
        self.report.nested
    }
}

/// Builds `M_1..M_{max_window}` and assigns predictions so that every
/// ambiguous state agrees with its one-pair-shorter parent. When no such
/// assignment exists the levels keep lexicographic predictions and the
/// report carries the conflicting chains.
pub fn build_nested_sequence(plant: &FinitePlant, max_window: usize) -> Result<NestedSequence, ConstructError> {
    if max_window == 0 {
        return Err(ConstructError::ZeroWindow);
    }
    let mut levels = (1..=max_window)
        .map(|i| build_abstraction(plant, i, OutputPolicy::Lexicographic))
        .collect::<Result<Vec<_>, _>>()?;

    // children[l][q]: ambiguous states at level l+1 whose parent is q at level l
    let mut children: Vec<Vec<Vec<StateId>>> = levels.iter().map(|m| vec![Vec::new(); m.num_states()]).collect();
    let mut has_parent: Vec<Vec<bool>> = levels.iter().map(|m| vec![false; m.num_states()]).collect();
    for l in 1..levels.len() {
        let (coarser, finer) = levels.split_at(l);
        let (coarse, fine) = (&coarser[l - 1], &finer[0]);
        for (q, state) in fine.states.iter().enumerate() {
            if !state.is_ambiguous() {
                continue;
            }
            if let Some(parent) = fine.parent_in(q, coarse) {
                if coarse.states[parent].is_ambiguous() {
                    children[l - 1][parent].push(q);
                    has_parent[l][q] = true;
                }
            }
        }
    }

    // subtree intersections, bottom-up
    let mut admissible: Vec<Vec<Vec<usize>>> = levels
        .iter()
        .map(|m| m.states.iter().map(|s| s.outputs.clone()).collect())
        .collect();
    for l in (0..levels.len()).rev() {
        for q in 0..levels[l].num_states() {
            if l + 1 < levels.len() {
                for &c in &children[l][q] {
                    let below = admissible[l + 1][c].clone();
                    admissible[l][q].retain(|y| below.contains(y));
                }
            }
        }
    }

    let mut conflicts = Vec::new();
    let mut failed_levels = vec![false; levels.len()];
    let mut choices: Vec<Vec<Option<usize>>> = levels.iter().map(|m| vec![None; m.num_states()]).collect();
    for l in 0..levels.len() {
        for root in 0..levels[l].num_states() {
            if !levels[l].states[root].is_ambiguous() || has_parent[l][root] {
                continue;
            }
            // members of the component rooted here, breadth first
            let mut members = vec![(l, root)];
            let mut k = 0;
            while k < members.len() {
                let (ml, mq) = members[k];
                if ml + 1 < levels.len() {
                    members.extend(children[ml][mq].iter().map(|&c| (ml + 1, c)));
                }
                k += 1;
            }
            match admissible[l][root].first().copied() {
                Some(chosen) => {
                    for &(ml, mq) in &members {
                        choices[ml][mq] = Some(chosen);
                    }
                }
                None => {
                    let mut running: Vec<usize> = (0..plant.num_outputs()).collect();
                    let mut conflict = Vec::new();
                    for (k, &(ml, mq)) in members.iter().enumerate() {
                        let ys = &levels[ml].states[mq].outputs;
                        let before = running.len();
                        running.retain(|y| ys.contains(y));
                        if k == 0 || running.len() < before {
                            conflict.push(ConflictMember {
                                level: ml + 1,
                                state: mq,
                                label: levels[ml].state_label(mq),
                                outputs: ys.iter().map(|&y| levels[ml].outputs[y].clone()).collect(),
                            });
                        }
                        if running.is_empty() {
                            failed_levels[ml] = true;
                            break;
                        }
                    }
                    conflicts.push(conflict);
                }
            }
        }
    }

    let nested = conflicts.is_empty();
    if nested {
        for (l, level) in levels.iter_mut().enumerate() {
            for (q, choice) in choices[l].iter().enumerate() {
                if let Some(y) = choice {
                    level.states[q].prediction = *y;
                }
            }
        }
    }
    let report_levels = levels
        .iter()
        .enumerate()
        .map(|(l, m)| LevelNesting {
            level: l + 1,
            ok: !failed_levels[l],
            admissible: (0..m.num_states())
                .filter(|&q| m.states[q].is_ambiguous())
                .map(|q| AdmissibleEntry {
                    state: q,
                    label: m.state_label(q),
                    outputs: m.states[q].outputs.iter().map(|&y| m.outputs[y].clone()).collect(),
                    admissible: admissible[l][q].iter().map(|&y| m.outputs[y].clone()).collect(),
                    chosen: m.outputs[m.states[q].prediction].clone(),
                })
                .collect(),
        })
        .collect();
    Ok(NestedSequence {
        levels,
        report: NestingReport {
            nested,
            levels: report_levels,
            conflicts,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::plant::bundled;
    use crate::rational::int;

    fn sym(plant: &FinitePlant, y: &str, u: &str) -> (usize, usize) {
        (plant.output_index(y).unwrap(), plant.input_index(u).unwrap())
    }

    #[test]
    fn ex1_level_one_states() {
        let plant = bundled::ex1();
        let m1 = build_abstraction(&plant, 1, OutputPolicy::Lexicographic).unwrap();
        assert_eq!(m1.num_states(), 6);
        let finals: Vec<String> = (0..m1.num_states())
            .filter(|&q| matches!(m1.state(q).kind, StateKind::Final(_)))
            .map(|q| m1.state_label(q))
            .collect();
        assert_eq!(finals, ["(lo|a)", "(hi|a)", "(lo|b)", "(hi|b)"]);
        let (lo, a) = sym(&plant, "lo", "a");
        let q = m1.find(&Snapshot::single(lo, a)).unwrap();
        assert_eq!(m1.state(q).states, vec![1, 2]);
        assert_eq!(m1.state(q).perf, int(2));
        // no transition reaches q_empty
        for q in 0..m1.num_states() {
            if q == IMPOSSIBLE {
                continue;
            }
            for u in 0..2 {
                for y in 0..2 {
                    assert_ne!(m1.next(q, u, y), IMPOSSIBLE, "{}", m1.state_label(q));
                }
            }
        }
        assert_eq!(m1.step(ROOT, a, lo).unwrap().next, q);
    }

    #[test]
    fn ex2_window_slide_into_impossible() {
        let plant = bundled::ex2();
        let m2 = build_abstraction(&plant, 2, OutputPolicy::Lexicographic).unwrap();
        let big_a = plant.output_index("A").unwrap();
        let big_b = plant.output_index("B").unwrap();
        let a = plant.input_index("a").unwrap();
        let q = m2.find(&Snapshot::new(vec![big_b, big_a], vec![a, a])).unwrap();
        assert!(matches!(m2.state(q).kind, StateKind::Final(_)));
        assert_eq!(m2.step(q, a, big_a).unwrap().next, IMPOSSIBLE);
        // reachable from the root
        let partial = m2.next(ROOT, a, big_a);
        assert_eq!(m2.next(partial, a, big_b), q);
    }

    #[test]
    fn impossible_state_absorbs_and_predicts_min_symbol() {
        let plant = bundled::ex1();
        let m = build_abstraction(&plant, 2, OutputPolicy::Lexicographic).unwrap();
        for u in 0..2 {
            for y in 0..2 {
                assert_eq!(m.next(IMPOSSIBLE, u, y), IMPOSSIBLE);
            }
        }
        let dead = m.state(IMPOSSIBLE);
        assert!(dead.states.is_empty() && dead.outputs.is_empty());
        assert_eq!(dead.prediction, 0);
        assert_eq!(dead.perf, int(0));
        assert_eq!(m.state(ROOT).perf, int(3));
    }

    #[test]
    fn root_never_jumps_to_impossible_on_producible_output() {
        for plant in [bundled::ex1(), bundled::ex2(), bundled::ex3()] {
            let m = build_abstraction(&plant, 1, OutputPolicy::Lexicographic).unwrap();
            for x in 0..plant.num_states() {
                for u in 0..plant.num_inputs() {
                    assert_ne!(m.next(ROOT, u, plant.output(x)), IMPOSSIBLE);
                }
            }
        }
    }

    #[test]
    fn final_annotations_match_oracle() {
        for plant in [bundled::ex1(), bundled::ex2(), bundled::ex3()] {
            for i in 1..=3 {
                let m = build_abstraction(&plant, i, OutputPolicy::Lexicographic).unwrap();
                for state in m.states() {
                    if let Some(s) = state.kind.snapshot() {
                        assert_eq!(state.states, plant.snapshot_state_set(s).1);
                        assert!(!state.states.is_empty());
                        assert!(state.outputs.contains(&state.prediction));
                    }
                }
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let plant = bundled::ex1();
        let m = build_abstraction(&plant, 2, OutputPolicy::Lexicographic).unwrap();
        let again = Abstraction::from_json(&m.to_json()).unwrap();
        assert_eq!(m, again);
        assert!(m.to_dot().starts_with("digraph M2 {"));
    }

    #[test]
    fn nested_policy_inherits_parent_prediction() {
        let plant = bundled::ex3();
        let m1 = build_abstraction(&plant, 1, OutputPolicy::Lexicographic).unwrap();
        let m2 = build_abstraction(&plant, 2, OutputPolicy::NestedWith(&m1)).unwrap();
        for q in 0..m2.num_states() {
            if m2.state(q).is_ambiguous() {
                let parent = m2.parent_in(q, &m1).unwrap();
                assert_eq!(m2.state(q).prediction, m1.state(parent).prediction);
            }
        }
        assert!(matches!(
            build_abstraction(&plant, 3, OutputPolicy::NestedWith(&m1)),
            Err(ConstructError::LevelMismatch { .. })
        ));
    }

    #[test]
    fn nested_policy_reports_empty_intersection() {
        let plant = fixtures::nesting_conflict();
        let m1 = build_abstraction(&plant, 1, OutputPolicy::Lexicographic).unwrap();
        let err = build_abstraction(&plant, 2, OutputPolicy::NestedWith(&m1)).unwrap_err();
        assert!(matches!(err, ConstructError::NestingInfeasible { .. }), "{err}");
    }

    #[test]
    fn nested_sequence_reports_conflict_chain() {
        let plant = fixtures::nesting_conflict();
        let seq = build_nested_sequence(&plant, 2).unwrap();
        assert!(!seq.nested());
        assert_eq!(seq.levels.len(), 2);
        let conflict = &seq.report.conflicts[0];
        assert_eq!(conflict[0].label, "(A|a)");
        // the member Y sets share no output
        let common = conflict.iter().fold(vec!["A", "B", "C"], |acc, member| {
            acc.into_iter().filter(|y| member.outputs.iter().any(|o| o == y)).collect()
        });
        assert!(common.is_empty());
        assert!(!seq.report.levels[1].ok);
        // predictions stay lexicographic
        for level in &seq.levels {
            for s in level.states() {
                assert_eq!(s.prediction, s.outputs.first().copied().unwrap_or(0));
            }
        }
    }

    #[test]
    fn nested_sequence_ex3_succeeds() {
        let seq = build_nested_sequence(&bundled::ex3(), 3).unwrap();
        assert!(seq.nested());
        assert_eq!(seq.levels.len(), 3);
        assert!(seq.report.levels.iter().all(|l| l.ok));
    }

    #[test]
    fn nested_sequence_trivial_without_ambiguity() {
        // output = state parity after one step is never ambiguous: identity sensor
        let plant = FinitePlant::from_tables(
            "identity",
            vec!["0".into(), "1".into()],
            vec!["a".into()],
            vec!["y0".into(), "y1".into()],
            vec![vec![1], vec![0]],
            vec![0, 1],
            vec![int(0), int(0)],
            vec![(int(0), int(0))],
            None,
        )
        .unwrap();
        let seq = build_nested_sequence(&plant, 3).unwrap();
        assert!(seq.nested());
        for level in &seq.report.levels[1..] {
            // only the root is ambiguous
            assert_eq!(level.admissible.len(), 1);
        }
    }

    #[test]
    fn output_values_cover_all_states() {
        let plant = bundled::ex1();
        let m = build_abstraction(&plant, 1, OutputPolicy::Lexicographic).unwrap();
        let values = m.output_values();
        for s in m.states() {
            assert!(values.contains(&s.perf));
        }
    }
}
