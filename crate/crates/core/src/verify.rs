//! Exhaustive checks of the approximation properties of a sequence `M_i`.
//!
//! Every violated report carries a [`RunWitness`]: an initial plant state
//! and an input sequence. Replaying it with [`FinitePlant::simulate`] and
//! [`Abstraction::step`] reproduces the violation without trusting the
//! checker.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::codec::CodecTable;
use crate::construct::{build_nested_sequence, Abstraction, ConstructError, StateKind, ROOT};
use crate::gain::{error_gain, CostWeights, GainError};
use crate::plant::FinitePlant;
use crate::rational::Extended;

/// Default for the largest window scanned by [`check_completeness`].
pub const DEFAULT_MAX_WINDOW: usize = 4;

/// Default depth for depth-bounded checks at window `i`.
pub fn default_depth(window: usize) -> usize {
    2 * window + 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    NotApplicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Depth(usize),
    Exhaustive,
}

/// A concrete run: start the plant in `x0` and every abstraction in `q_o`,
/// then apply `inputs` in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunWitness {
    pub x0: usize,
    pub inputs: Vec<usize>,
}

impl RunWitness {
    /// `(x(t), q(t))` for `t = 0..=inputs.len()`, with `q` driven by the
    /// measured output.
    pub fn replay(&self, plant: &FinitePlant, m: &Abstraction) -> Vec<(usize, usize)> {
        let trace = plant.simulate(self.x0, &self.inputs);
        let mut q = ROOT;
        let mut path = Vec::with_capacity(trace.records.len());
        for record in &trace.records {
            path.push((record.x, q));
            if let Some(u) = record.u {
                q = m.step(q, u, record.y).expect("witness symbols in range").next;
            }
        }
        path
    }

    /// End state `(x, q)` of [`replay`](Self::replay).
    pub fn end(&self, plant: &FinitePlant, m: &Abstraction) -> (usize, usize) {
        *self.replay(plant, m).last().expect("replay is never empty")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub verdict: Verdict,
    pub scope: Scope,
    /// Product states, runs or abstract states examined.
    pub examined: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<RunWitness>,
    pub detail: String,
}

impl PropertyReport {
    fn new(property: &str, scope: Scope) -> Self {
        Self {
            property: property.to_string(),
            verdict: Verdict::Holds,
            scope,
            examined: 0,
            witness: None,
            detail: String::new(),
        }
    }

    fn violated(mut self, witness: RunWitness, detail: String) -> Self {
        self.verdict = Verdict::Violated;
        self.witness = Some(witness);
        self.detail = detail;
        self
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Breadth-first walk over a deterministic product from the initial plant
/// states, recording for each node the edge that discovered it.
struct ProductWalk<N> {
    nodes: Vec<N>,
    parent: Vec<Option<(usize, usize)>>,
    x0: Vec<usize>,
}

impl<N: Clone + Eq + std::hash::Hash> ProductWalk<N> {
    /// `start(x0)` gives the initial node, `next(node, u)` its successor.
    /// `visit` returns false to stop at the first bad node.
    fn run(
        starts: &[usize],
        inputs: usize,
        start: impl Fn(usize) -> N,
        next: impl Fn(&N, usize) -> N,
        mut visit: impl FnMut(&N) -> bool,
    ) -> (Self, Option<usize>) {
        let mut walk = Self {
            nodes: Vec::new(),
            parent: Vec::new(),
            x0: Vec::new(),
        };
        let mut index: HashMap<N, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        for &x0 in starts {
            let node = start(x0);
            if index.contains_key(&node) {
                continue;
            }
            index.insert(node.clone(), walk.nodes.len());
            queue.push_back(walk.nodes.len());
            walk.nodes.push(node);
            walk.parent.push(None);
            walk.x0.push(x0);
        }
        while let Some(k) = queue.pop_front() {
            if !visit(&walk.nodes[k]) {
                return (walk, Some(k));
            }
            for u in 0..inputs {
                let succ = next(&walk.nodes[k], u);
                if index.contains_key(&succ) {
                    continue;
                }
                index.insert(succ.clone(), walk.nodes.len());
                queue.push_back(walk.nodes.len());
                walk.nodes.push(succ);
                walk.parent.push(Some((k, u)));
                walk.x0.push(walk.x0[k]);
            }
        }
        (walk, None)
    }

    fn witness(&self, mut k: usize) -> RunWitness {
        let x0 = self.x0[k];
        let mut inputs = Vec::new();
        while let Some((prev, u)) = self.parent[k] {
            inputs.push(u);
            k = prev;
        }
        inputs.reverse();
        RunWitness { x0, inputs }
    }
}

/// The reconstruction loop recovers every measured output: predicting
/// `ỹ = g_i(q)`, encoding `w = β(ỹ, y)` and decoding `α(ỹ, w)` gives `y`
/// back, over all initial states and input trees of the given depth.
pub fn check_output_match(plant: &FinitePlant, m: &Abstraction, codec: &CodecTable, depth: usize) -> PropertyReport {
    let mut report = PropertyReport::new("output_match", Scope::Depth(depth));
    assert_eq!(codec.outputs(), plant.num_outputs(), "codec alphabet differs from plant outputs");
    for &x0 in plant.initial_states() {
        let mut inputs = Vec::new();
        if let Some(detail) = output_match_tree(plant, m, codec, x0, ROOT, depth, &mut inputs, &mut report.examined) {
            return report.violated(RunWitness { x0, inputs }, detail);
        }
    }
    report.detail = format!("{} runs of length {depth}", report.examined);
    report
}

#[allow(clippy::too_many_arguments)]
fn output_match_tree(
    plant: &FinitePlant,
    m: &Abstraction,
    codec: &CodecTable,
    x: usize,
    q: usize,
    depth: usize,
    inputs: &mut Vec<usize>,
    runs: &mut usize,
) -> Option<String> {
    let y = plant.output(x);
    let predicted = m.state(q).prediction;
    let w = codec.encode(predicted, y);
    let Some(decoded) = codec.decode(predicted, w) else {
        return Some(format!("decode failure at t={} (prediction {predicted}, w={w})", inputs.len()));
    };
    if decoded != y {
        return Some(format!("decoded {decoded} instead of {y} at t={}", inputs.len()));
    }
    if inputs.len() == depth {
        *runs += 1;
        return None;
    }
    for u in 0..plant.num_inputs() {
        inputs.push(u);
        let found = output_match_tree(plant, m, codec, plant.step(x, u), m.next(q, u, decoded), depth, inputs, runs);
        if found.is_some() {
            return found;
        }
        inputs.pop();
    }
    None
}

/// `x(t) ∈ X(q(t))` along every driven run. Exhaustive mode walks the
/// reachable product; depth mode enumerates input trees.
pub fn check_inclusion(plant: &FinitePlant, m: &Abstraction, scope: Scope) -> PropertyReport {
    let mut report = PropertyReport::new("inclusion", scope);
    let contains = |(x, q): &(usize, usize)| m.state(*q).states.binary_search(x).is_ok();
    match scope {
        Scope::Exhaustive => {
            let (walk, bad) = ProductWalk::run(
                plant.initial_states(),
                plant.num_inputs(),
                |x0| (x0, ROOT),
                |&(x, q), u| (plant.step(x, u), m.next(q, u, plant.output(x))),
                contains,
            );
            report.examined = walk.nodes.len();
            if let Some(k) = bad {
                let (x, q) = walk.nodes[k];
                return report.violated(
                    walk.witness(k),
                    format!("state {} outside X({})", plant.state_labels()[x], m.state_label(q)),
                );
            }
            report.detail = format!("{} reachable product states", report.examined);
        }
        Scope::Depth(depth) => {
            for &x0 in plant.initial_states() {
                let mut stack = vec![(x0, ROOT, Vec::new())];
                while let Some((x, q, inputs)) = stack.pop() {
                    report.examined += 1;
                    if !contains(&(x, q)) {
                        let detail = format!("state {} outside X({})", plant.state_labels()[x], m.state_label(q));
                        return report.violated(RunWitness { x0, inputs }, detail);
                    }
                    if inputs.len() < depth {
                        for u in (0..plant.num_inputs()).rev() {
                            let mut longer = inputs.clone();
                            longer.push(u);
                            stack.push((plant.step(x, u), m.next(q, u, plant.output(x)), longer));
                        }
                    }
                }
            }
            report.detail = format!("{} tree nodes up to depth {depth}", report.examined);
        }
    }
    report
}

/// `μ(h(x)) ≤ μ(h_{i+1}(q_{i+1})) ≤ μ(h_i(q_i))` and `μ(h(x)) ≤ μ(h_i(q_i))`
/// on every reachable state of the product of the plant with both levels.
pub fn check_performance_chain(plant: &FinitePlant, coarse: &Abstraction, fine: &Abstraction) -> PropertyReport {
    let mut report = PropertyReport::new("performance_chain", Scope::Exhaustive);
    let (walk, bad) = ProductWalk::run(
        plant.initial_states(),
        plant.num_inputs(),
        |x0| (x0, ROOT, ROOT),
        |&(x, a, b), u| {
            let y = plant.output(x);
            (plant.step(x, u), coarse.next(a, u, y), fine.next(b, u, y))
        },
        |&(x, a, b)| {
            let actual = plant.cost(x);
            let fine_bound = &fine.state(b).perf_weight;
            let coarse_bound = &coarse.state(a).perf_weight;
            actual <= coarse_bound && actual <= fine_bound && fine_bound <= coarse_bound
        },
    );
    report.examined = walk.nodes.len();
    if let Some(k) = bad {
        let (x, a, b) = walk.nodes[k];
        let detail = format!(
            "mu(v)={} at {}, level {} bound {} at {}, level {} bound {} at {}",
            plant.cost(x),
            plant.state_labels()[x],
            fine.window(),
            fine.state(b).perf_weight,
            fine.state_label(b),
            coarse.window(),
            coarse.state(a).perf_weight,
            coarse.state_label(a),
        );
        return report.violated(walk.witness(k), detail);
    }
    report.detail = format!("{} reachable triple-product states", report.examined);
    report
}

/// Every ambiguous state of the longer machine predicts the same output as
/// its truncation (oldest pair dropped) in the shorter one.
pub fn check_output_nested(plant: &FinitePlant, coarse: &Abstraction, fine: &Abstraction) -> PropertyReport {
    let mut report = PropertyReport::new("output_nested", Scope::Exhaustive);
    for q in 0..fine.num_states() {
        let state = fine.state(q);
        if !state.is_ambiguous() {
            continue;
        }
        report.examined += 1;
        let Some(parent) = fine.parent_in(q, coarse) else {
            continue;
        };
        if state.prediction != coarse.state(parent).prediction {
            let witness = match &state.kind {
                StateKind::Partial(s) | StateKind::Final(s) => {
                    let (origins, _) = plant.snapshot_state_set(s);
                    RunWitness {
                        x0: origins[0],
                        inputs: s.inputs.iter().rev().copied().collect(),
                    }
                }
                _ => RunWitness {
                    x0: plant.initial_states()[0],
                    inputs: Vec::new(),
                },
            };
            let detail = format!(
                "{} predicts {} but {} predicts {}",
                fine.state_label(q),
                fine.output_labels()[state.prediction],
                coarse.state_label(parent),
                coarse.output_labels()[coarse.state(parent).prediction],
            );
            return report.violated(witness, detail);
        }
    }
    report.detail = format!("{} ambiguous states compared", report.examined);
    report
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub report: PropertyReport,
    /// `γ_i` per level; empty when not applicable.
    pub gains: Vec<Extended>,
}

/// `γ_1 ≥ γ_2 ≥ …` together with the pointwise inequality
/// `μ_Δ(w_{i+1}) ≤ μ_Δ(w_i)` on each reachable triple product. Only
/// applicable to output-nested sequences under positive definite `μ_Δ`.
pub fn check_gain_monotone(
    plant: &FinitePlant,
    levels: &[Abstraction],
    weights: &CostWeights,
) -> Result<MonotoneReport, GainError> {
    let mut report = PropertyReport::new("gain_monotone", Scope::Exhaustive);
    if !weights.is_positive_definite() {
        report.verdict = Verdict::NotApplicable;
        report.detail = "mu_delta is not positive definite".into();
        return Ok(MonotoneReport { report, gains: Vec::new() });
    }
    if let Some(k) = (1..levels.len()).find(|&k| !check_output_nested(plant, &levels[k - 1], &levels[k]).holds()) {
        report.verdict = Verdict::NotApplicable;
        report.detail = format!(
            "levels {} and {} are not output-nested",
            levels[k - 1].window(),
            levels[k].window()
        );
        return Ok(MonotoneReport { report, gains: Vec::new() });
    }
    let gains = levels
        .iter()
        .map(|m| error_gain(plant, m, weights).map(|r| r.gamma))
        .collect::<Result<Vec<_>, _>>()?;
    let p = plant.num_outputs();
    for k in 1..levels.len() {
        let (coarse, fine) = (&levels[k - 1], &levels[k]);
        let cost = |m: &Abstraction, q: usize, x: usize| &weights.mu_delta[(m.state(q).prediction + p - plant.output(x)) % p];
        let (walk, bad) = ProductWalk::run(
            plant.initial_states(),
            plant.num_inputs(),
            |x0| (x0, ROOT, ROOT),
            |&(x, a, b), u| {
                let y = plant.output(x);
                (plant.step(x, u), coarse.next(a, u, y), fine.next(b, u, y))
            },
            |&(x, a, b)| cost(fine, b, x) <= cost(coarse, a, x),
        );
        report.examined += walk.nodes.len();
        if let Some(k) = bad {
            let detail = format!("disturbance cost grows from level {} to {}", coarse.window(), fine.window());
            return Ok(MonotoneReport {
                report: report.violated(walk.witness(k), detail),
                gains,
            });
        }
        if gains[k] > gains[k - 1] {
            report.verdict = Verdict::Violated;
            report.detail = format!("gamma_{} = {} > gamma_{} = {}", fine.window(), gains[k], coarse.window(), gains[k - 1]);
            return Ok(MonotoneReport { report, gains });
        }
    }
    let listed: Vec<String> = gains.iter().map(|g| g.to_string()).collect();
    report.detail = format!("gains {}", listed.join(" >= "));
    Ok(MonotoneReport { report, gains })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub max_window: usize,
    /// First window with zero error gain; `None` means none was found up to
    /// `max_window`, not that no zero-gain predictor exists.
    pub i_star: Option<usize>,
    pub gains: Vec<Extended>,
    pub nested: bool,
    /// Every reachable final state at `i_star` has a single output.
    pub final_unambiguous: Option<bool>,
    /// `γ_j = 0` for all `j ≥ i_star`; checked only for nested sequences.
    pub tail_zero: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Gain(#[from] GainError),
}

/// Scans windows `1..=max_window` for the first zero-gain abstraction.
pub fn check_completeness(
    plant: &FinitePlant,
    weights: &CostWeights,
    max_window: usize,
) -> Result<CompletenessReport, VerifyError> {
    let sequence = build_nested_sequence(plant, max_window)?;
    let gains = sequence
        .levels
        .iter()
        .map(|m| error_gain(plant, m, weights).map(|r| r.gamma))
        .collect::<Result<Vec<_>, _>>()?;
    let nested = sequence.nested();
    let position = gains.iter().position(|g| g.is_zero());
    let i_star = position.map(|k| k + 1);
    let final_unambiguous = position.map(|k| {
        let m = &sequence.levels[k];
        m.states()
            .iter()
            .filter(|s| matches!(s.kind, StateKind::Final(_)))
            .all(|s| s.outputs.len() == 1)
    });
    let tail_zero = match position {
        Some(k) if nested => Some(gains[k..].iter().all(|g| g.is_zero())),
        _ => None,
    };
    Ok(CompletenessReport {
        max_window,
        i_star,
        gains,
        nested,
        final_unambiguous,
        tail_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{build_abstraction, OutputPolicy};
    use crate::fixtures;
    use crate::plant::bundled;
    use crate::rational::int;

    fn lex(plant: &FinitePlant, i: usize) -> Abstraction {
        build_abstraction(plant, i, OutputPolicy::Lexicographic).unwrap()
    }

    #[test]
    fn output_match_ex1_depth_six() {
        let plant = bundled::ex1();
        let r = check_output_match(&plant, &lex(&plant, 1), &CodecTable::minimal(2).unwrap(), 6);
        assert!(r.holds());
        assert_eq!(r.examined, 64 * 4);
    }

    #[test]
    fn output_match_catches_broken_codec() {
        let plant = bundled::ex1();
        let m = lex(&plant, 1);
        let codec = CodecTable::from_table(vec![vec![0, 0], vec![1, 0]], 2).unwrap();
        let r = check_output_match(&plant, &m, &codec, 4);
        assert_eq!(r.verdict, Verdict::Violated);
        // replay: at the end of the witness run the codec loses y
        let w = r.witness.unwrap();
        let (x, q) = w.end(&plant, &m);
        let pred = m.state(q).prediction;
        let y = plant.output(x);
        assert_ne!(codec.decode(pred, codec.encode(pred, y)), Some(y));
    }

    #[test]
    fn inclusion_on_bundled_plants() {
        for (plant, i) in [(bundled::ex1(), 1), (bundled::ex2(), 2), (bundled::ex3(), 2)] {
            let m = lex(&plant, i);
            assert!(check_inclusion(&plant, &m, Scope::Exhaustive).holds());
            assert!(check_inclusion(&plant, &m, Scope::Depth(default_depth(i))).holds());
        }
    }

    #[test]
    fn inclusion_catches_shrunk_state_set() {
        let plant = bundled::ex1();
        let mut m = lex(&plant, 1);
        let target = (2..m.num_states()).find(|&q| m.state(q).states.len() > 1).unwrap();
        m.state_mut(target).states.remove(0);
        for scope in [Scope::Exhaustive, Scope::Depth(4)] {
            let r = check_inclusion(&plant, &m, scope);
            assert_eq!(r.verdict, Verdict::Violated);
            let (x, q) = r.witness.unwrap().end(&plant, &m);
            assert!(!m.state(q).states.contains(&x));
        }
    }

    #[test]
    fn performance_chain_bundled() {
        for plant in [bundled::ex1(), bundled::ex3()] {
            let r = check_performance_chain(&plant, &lex(&plant, 1), &lex(&plant, 2));
            assert!(r.holds(), "{}", r.detail);
            assert!(r.examined > 0);
        }
    }

    #[test]
    fn performance_chain_catches_lowered_bound() {
        let plant = bundled::ex1();
        let coarse = lex(&plant, 1);
        let mut fine = lex(&plant, 2);
        let target = (2..fine.num_states())
            .find(|&q| fine.state(q).perf_weight > int(0))
            .unwrap();
        fine.state_mut(target).perf_weight = int(-1);
        let r = check_performance_chain(&plant, &coarse, &fine);
        assert_eq!(r.verdict, Verdict::Violated);
        let w = r.witness.unwrap();
        let (x, b) = w.end(&plant, &fine);
        assert!(plant.cost(x) > &fine.state(b).perf_weight || b == target);
    }

    #[test]
    fn nested_sequence_passes_nesting_check() {
        let plant = bundled::ex1();
        let seq = build_nested_sequence(&plant, 3).unwrap();
        assert!(seq.nested());
        for k in 1..seq.levels.len() {
            assert!(check_output_nested(&plant, &seq.levels[k - 1], &seq.levels[k]).holds());
        }
    }

    #[test]
    fn nesting_violation_replays() {
        let plant = fixtures::nesting_conflict();
        let (coarse, fine) = (lex(&plant, 1), lex(&plant, 2));
        let r = check_output_nested(&plant, &coarse, &fine);
        assert_eq!(r.verdict, Verdict::Violated);
        let w = r.witness.unwrap();
        let (_, q_fine) = w.end(&plant, &fine);
        let (_, q_coarse) = w.end(&plant, &coarse);
        assert!(fine.state(q_fine).is_ambiguous());
        assert_ne!(fine.state(q_fine).prediction, coarse.state(q_coarse).prediction);
    }

    #[test]
    fn constant_output_nesting_is_vacuous() {
        let plant = fixtures::constant_output();
        let r = check_output_nested(&plant, &lex(&plant, 1), &lex(&plant, 2));
        assert!(r.holds());
        assert_eq!(r.examined, 0);
    }

    #[test]
    fn gain_monotone_on_ex3() {
        let plant = bundled::ex3();
        let seq = build_nested_sequence(&plant, 3).unwrap();
        let r = check_gain_monotone(&plant, &seq.levels, &CostWeights::defaults(2, 2)).unwrap();
        assert!(r.report.holds(), "{}", r.report.detail);
        assert!(r.gains.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn gain_monotone_not_applicable_without_nesting() {
        let plant = fixtures::nesting_conflict();
        let levels = vec![lex(&plant, 1), lex(&plant, 2)];
        let r = check_gain_monotone(&plant, &levels, &CostWeights::defaults(1, 3)).unwrap();
        assert_eq!(r.report.verdict, Verdict::NotApplicable);
        let flat = CostWeights {
            rho: vec![int(1)],
            mu_delta: vec![int(1), int(1), int(1)],
        };
        let r = check_gain_monotone(&plant, &levels[..1], &flat).unwrap();
        assert_eq!(r.report.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn constant_output_gains_all_zero() {
        let plant = fixtures::constant_output();
        let levels = vec![lex(&plant, 1), lex(&plant, 2), lex(&plant, 3)];
        let r = check_gain_monotone(&plant, &levels, &CostWeights::defaults(2, 1)).unwrap();
        assert!(r.report.holds());
        assert!(r.gains.iter().all(|g| g.is_zero()));
        let c = check_completeness(&plant, &CostWeights::defaults(2, 1), 3).unwrap();
        assert_eq!(c.i_star, Some(1));
    }

    #[test]
    fn ex3_completes_at_window_two() {
        let plant = bundled::ex3();
        let c = check_completeness(&plant, &CostWeights::defaults(2, 2), DEFAULT_MAX_WINDOW).unwrap();
        assert_eq!(c.i_star, Some(2));
        assert_eq!(c.final_unambiguous, Some(true));
        assert!(c.gains[0] > Extended::Finite(int(0)));
        if c.nested {
            assert_eq!(c.tail_zero, Some(true));
        }
    }

    #[test]
    fn ex1_completeness_scan_reports_what_it_finds() {
        let plant = bundled::ex1();
        let weights = CostWeights::defaults(2, 2);
        let c = check_completeness(&plant, &weights, 3).unwrap();
        assert_eq!(c.gains.len(), 3);
        let first_zero = c.gains.iter().position(|g| g.is_zero()).map(|k| k + 1);
        assert_eq!(c.i_star, first_zero);
    }
}
