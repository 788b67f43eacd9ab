//! Output-feedback controller synthesis on the disturbance-driven
//! abstraction `M̂_i`.
//!
//! `M̂_i` replaces the measured output by a disturbance symbol `w` that the
//! decoder turns back into `y = α(g_i(q), w)`. A state-feedback policy on
//! `M̂_i` that keeps `Σσ` bounded below for every disturbance sequence is
//! found by min-max value iteration, revalidated by cycle analysis, and then
//! run against the plant as a DFM driven by the measured output.

use std::collections::HashMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecTable;
use crate::construct::{Abstraction, IMPOSSIBLE, ROOT};
use crate::gain::CostWeights;
use crate::plant::FinitePlant;
use crate::rational::{self, Extended, Rational};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("error gain is infinite; no stage cost can be formed")]
    InfiniteGain,
    #[error("tau must be positive (got {0})")]
    NonPositiveTau(String),
    #[error("codec alphabet has {codec} outputs, abstraction has {outputs}")]
    CodecMismatch { codec: usize, outputs: usize },
    #[error("policy has {got} entries for {expected} states")]
    PolicyLength { expected: usize, got: usize },
    #[error("controller document: {0}")]
    Controller(String),
}

/// Transition table of `M̂_i`: `q' = f_i(q, u, α(g_i(q), w))`, or `q_∅` when
/// the decoder fails.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MhatDynamics {
    states: usize,
    inputs: usize,
    disturbances: usize,
    next: Vec<usize>,
}

impl MhatDynamics {
    pub fn new(m: &Abstraction, codec: &CodecTable) -> Result<Self, SynthError> {
        if codec.outputs() != m.num_outputs() {
            return Err(SynthError::CodecMismatch {
                codec: codec.outputs(),
                outputs: m.num_outputs(),
            });
        }
        let (n, k, d) = (m.num_states(), m.num_inputs(), codec.disturbances());
        let mut next = Vec::with_capacity(n * k * d);
        for q in 0..n {
            let predicted = m.state(q).prediction;
            for u in 0..k {
                for w in 0..d {
                    next.push(match codec.decode(predicted, w) {
                        Some(y) => m.next(q, u, y),
                        None => IMPOSSIBLE,
                    });
                }
            }
        }
        Ok(Self {
            states: n,
            inputs: k,
            disturbances: d,
            next,
        })
    }

    /// Builds a table directly; `next[(q·inputs + u)·disturbances + w]`.
    pub fn from_table(states: usize, inputs: usize, disturbances: usize, next: Vec<usize>) -> Self {
        assert_eq!(next.len(), states * inputs * disturbances, "transition table size");
        assert!(next.iter().all(|&q| q < states), "transition target out of range");
        Self {
            states,
            inputs,
            disturbances,
            next,
        }
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs
    }

    pub fn num_disturbances(&self) -> usize {
        self.disturbances
    }

    pub fn next(&self, q: usize, u: usize, w: usize) -> usize {
        self.next[(q * self.inputs + u) * self.disturbances + w]
    }
}

/// `σ(q,u,w) = τ·μ_Δ(w) − μ(h_i(q)) − τ·γ·ρ_Δ(u)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCost {
    #[serde(with = "rational::as_str")]
    pub tau: Rational,
    #[serde(with = "rational::as_str")]
    pub gamma: Rational,
    inputs: usize,
    disturbances: usize,
    #[serde(with = "rational::vec_as_str")]
    sigma: Vec<Rational>,
}

impl StageCost {
    pub fn build(m: &Abstraction, weights: &CostWeights, tau: &Rational, gamma: &Extended) -> Result<Self, SynthError> {
        if !tau.is_positive() {
            return Err(SynthError::NonPositiveTau(rational::format(tau)));
        }
        let gamma = gamma.finite().ok_or(SynthError::InfiniteGain)?.clone();
        let (k, d) = (m.num_inputs(), weights.mu_delta.len());
        let mut sigma = Vec::with_capacity(m.num_states() * k * d);
        for q in 0..m.num_states() {
            let perf = &m.state(q).perf_weight;
            for u in 0..k {
                let input_term = tau * &gamma * &weights.rho[u];
                for w in 0..d {
                    sigma.push(tau * &weights.mu_delta[w] - perf - &input_term);
                }
            }
        }
        Ok(Self {
            tau: tau.clone(),
            gamma,
            inputs: k,
            disturbances: d,
            sigma,
        })
    }

    /// Builds a table directly; indexed like [`MhatDynamics::from_table`].
    pub fn from_table(inputs: usize, disturbances: usize, sigma: Vec<Rational>) -> Self {
        Self {
            tau: rational::one(),
            gamma: rational::zero(),
            inputs,
            disturbances,
            sigma,
        }
    }

    pub fn get(&self, q: usize, u: usize, w: usize) -> &Rational {
        &self.sigma[(q * self.inputs + u) * self.disturbances + w]
    }

    pub fn max_abs(&self) -> Rational {
        self.sigma.iter().map(|s| s.abs()).max().unwrap_or_else(rational::zero)
    }

    pub fn scaled(&self, factor: &Rational) -> Self {
        Self {
            sigma: self.sigma.iter().map(|s| s * factor).collect(),
            ..self.clone()
        }
    }
}

/// `min_u max_w (−σ(q,u,w) + J(q'))` with the smallest minimizing `u`.
fn best_input(dynamics: &MhatDynamics, cost: &StageCost, values: &[Rational], q: usize) -> (usize, Rational) {
    let mut best: Option<(usize, Rational)> = None;
    for u in 0..dynamics.inputs {
        let worst = (0..dynamics.disturbances)
            .map(|w| &values[dynamics.next(q, u, w)] - cost.get(q, u, w))
            .max()
            .expect("at least one disturbance symbol");
        if best.as_ref().is_none_or(|(_, b)| worst < *b) {
            best = Some((u, worst));
        }
    }
    best.expect("at least one input")
}

/// One application of `J ↦ max{0, min_u max_w (−σ + J∘f̂)}`.
pub fn bellman_step(dynamics: &MhatDynamics, cost: &StageCost, values: &[Rational]) -> Vec<Rational> {
    (0..dynamics.states)
        .map(|q| {
            let (_, v) = best_input(dynamics, cost, values, q);
            if v.is_negative() {
                rational::zero()
            } else {
                v
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ValueIteration {
    Converged {
        #[serde(with = "rational::vec_as_str")]
        values: Vec<Rational>,
        policy: Vec<usize>,
        iterations: usize,
    },
    Diverged {
        state: usize,
        iterations: usize,
        #[serde(with = "rational::as_str")]
        bound: Rational,
    },
}

impl ValueIteration {
    pub fn policy(&self) -> Option<&[usize]> {
        match self {
            ValueIteration::Converged { policy, .. } => Some(policy),
            ValueIteration::Diverged { .. } => None,
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            ValueIteration::Converged { iterations, .. } | ValueIteration::Diverged { iterations, .. } => *iterations,
        }
    }
}

/// `B = (|Q| + 1)·max|σ|`; a value above it can only come from an
/// adversarial cycle with positive gain, so iteration would never stop.
pub fn divergence_bound(dynamics: &MhatDynamics, cost: &StageCost) -> Rational {
    Rational::from_integer((dynamics.states + 1).into()) * cost.max_abs()
}

/// Iterates from `J_0 = 0` until a fixed point or until some value exceeds
/// [`divergence_bound`].
pub fn value_iteration(dynamics: &MhatDynamics, cost: &StageCost) -> ValueIteration {
    let bound = divergence_bound(dynamics, cost);
    let mut values = vec![rational::zero(); dynamics.states];
    let mut iterations = 0;
    loop {
        let next = bellman_step(dynamics, cost, &values);
        iterations += 1;
        assert!(
            next.iter().zip(&values).all(|(a, b)| a >= b),
            "value iteration must be monotone"
        );
        if next == values {
            let policy = (0..dynamics.states)
                .map(|q| best_input(dynamics, cost, &values, q).0)
                .collect();
            return ValueIteration::Converged {
                values,
                policy,
                iterations,
            };
        }
        if let Some(state) = next.iter().position(|v| *v > bound) {
            return ValueIteration::Diverged {
                state,
                iterations,
                bound,
            };
        }
        values = next;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleStep {
    pub state: usize,
    pub disturbance: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub window: usize,
    #[serde(with = "rational::as_str")]
    pub tau: Rational,
    #[serde(with = "rational::as_str")]
    pub gamma: Rational,
    pub policy: Vec<usize>,
    /// Every cycle of `q → f̂(q, φ(q), w)` has `Σσ ≥ 0`.
    pub bounded_below: bool,
    /// A cycle with `Σσ < 0` when `bounded_below` is false.
    pub witness: Vec<CycleStep>,
}

/// Checks the closed loop `(M̂_i, φ)` against every disturbance sequence by
/// looking for a negative-`σ` cycle with Bellman-Ford over all states.
pub fn certify(dynamics: &MhatDynamics, cost: &StageCost, policy: &[usize], window: usize) -> Result<Certificate, SynthError> {
    if policy.len() != dynamics.states {
        return Err(SynthError::PolicyLength {
            expected: dynamics.states,
            got: policy.len(),
        });
    }
    let mut edges = Vec::new();
    for (q, &u) in policy.iter().enumerate() {
        for w in 0..dynamics.disturbances {
            edges.push((q, dynamics.next(q, u, w), w, cost.get(q, u, w).clone()));
        }
    }
    let n = dynamics.states;
    let mut dist = vec![rational::zero(); n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut changed = None;
    for _ in 0..=n {
        changed = None;
        for (e, (from, to, _, weight)) in edges.iter().enumerate() {
            let candidate = &dist[*from] + weight;
            if candidate < dist[*to] {
                dist[*to] = candidate;
                pred[*to] = Some(e);
                changed = Some(*to);
            }
        }
        if changed.is_none() {
            break;
        }
    }
    let witness = match changed {
        None => Vec::new(),
        Some(mut v) => {
            for _ in 0..n {
                v = edges[pred[v].expect("predecessor chain")].0;
            }
            let start = v;
            let mut cycle = Vec::new();
            loop {
                let (from, _, w, _) = &edges[pred[v].expect("predecessor chain")];
                cycle.push(CycleStep {
                    state: *from,
                    disturbance: *w,
                });
                v = *from;
                if v == start {
                    break;
                }
            }
            cycle.reverse();
            cycle
        }
    };
    Ok(Certificate {
        window,
        tau: cost.tau.clone(),
        gamma: cost.gamma.clone(),
        policy: policy.to_vec(),
        bounded_below: witness.is_empty(),
        witness,
    })
}

/// The controller `K`: starts at `q_o`, applies `u = φ(q)` and updates with
/// the measured output through `M_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerDfm {
    pub plant: String,
    pub window: usize,
    pub states: Vec<String>,
    /// Controller inputs are plant outputs.
    pub inputs: Vec<String>,
    /// Controller outputs are plant inputs.
    pub outputs: Vec<String>,
    pub initial: usize,
    /// `φ(q)` as an index into `outputs`.
    pub action: Vec<usize>,
    /// `transition[q][y]`.
    pub transition: Vec<Vec<usize>>,
    /// `g_i(q)`, the output the controller expects to measure next.
    pub prediction: Vec<usize>,
    /// `h_i(q)`.
    #[serde(with = "rational::vec_as_str")]
    pub perf: Vec<Rational>,
}

impl ControllerDfm {
    pub fn new(m: &Abstraction, policy: &[usize]) -> Result<Self, SynthError> {
        if policy.len() != m.num_states() {
            return Err(SynthError::PolicyLength {
                expected: m.num_states(),
                got: policy.len(),
            });
        }
        Ok(Self {
            plant: m.plant_name().to_string(),
            window: m.window(),
            states: (0..m.num_states()).map(|q| m.state_label(q)).collect(),
            inputs: m.output_labels().to_vec(),
            outputs: m.input_labels().to_vec(),
            initial: ROOT,
            action: policy.to_vec(),
            transition: (0..m.num_states())
                .map(|q| (0..m.num_outputs()).map(|y| m.next(q, policy[q], y)).collect())
                .collect(),
            prediction: m.states().iter().map(|s| s.prediction).collect(),
            perf: m.states().iter().map(|s| s.perf.clone()).collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("controller serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let k: Self = serde_json::from_str(text).map_err(|e| SynthError::Controller(e.to_string()))?;
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let n = self.states.len();
        let bad = |what: &str| Err(SynthError::Controller(what.to_string()));
        if self.initial >= n
            || self.action.len() != n
            || self.transition.len() != n
            || self.prediction.len() != n
            || self.perf.len() != n
        {
            return bad("table lengths disagree with the state list");
        }
        if self.action.iter().any(|&u| u >= self.outputs.len()) {
            return bad("action out of range");
        }
        if self.prediction.iter().any(|&y| y >= self.inputs.len()) {
            return bad("prediction out of range");
        }
        if self
            .transition
            .iter()
            .any(|row| row.len() != self.inputs.len() || row.iter().any(|&q| q >= n))
        {
            return bad("transition table malformed");
        }
        Ok(())
    }

    /// Whether the controller's alphabets fit the plant.
    pub fn matches(&self, plant: &FinitePlant) -> bool {
        self.inputs == plant.output_labels() && self.outputs == plant.input_labels()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedLoopRun {
    pub x0: usize,
    /// `Σ_{t ≤ s} μ(v(t))` for `s = 0..horizon`.
    #[serde(with = "rational::vec_as_str")]
    pub running_sums: Vec<Rational>,
    /// The sum does not change over the final quarter of the horizon.
    pub stabilized: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployReport {
    pub horizon: usize,
    /// States `(x, q)` of the closed loop reachable from `(x0, q_o)`.
    pub reachable: usize,
    /// Distinct cycles of the closed-loop functional graph.
    pub cycles: usize,
    /// `μ(h(x)) = 0` at every state on a reachable cycle.
    pub cycle_costs_zero: bool,
    /// Every reachable cycle has `Σμ(h(x)) ≤ 0`, so running sums stay bounded.
    pub bounded: bool,
    /// A cycle of `(x, q)` pairs breaking `bounded` or `cycle_costs_zero`.
    pub offending_cycle: Vec<(usize, usize)>,
    pub runs: Vec<ClosedLoopRun>,
}

/// Runs `(P, K)` from every initial plant state.
pub fn deploy_and_check(plant: &FinitePlant, controller: &ControllerDfm, horizon: usize) -> DeployReport {
    assert!(controller.matches(plant), "controller alphabets differ from the plant");
    let step = |(x, q): (usize, usize)| {
        let u = controller.action[q];
        (plant.step(x, u), controller.transition[q][plant.output(x)])
    };

    // functional graph: each start leads into exactly one cycle
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cycles = Vec::new();
    for (run_id, &x0) in plant.initial_states().iter().enumerate() {
        let mut node = (x0, controller.initial);
        let mut path = Vec::new();
        loop {
            if let Some(&owner) = seen.get(&node) {
                if owner == run_id {
                    let start = path.iter().position(|&n| n == node).expect("node on current path");
                    cycles.push(path[start..].to_vec());
                }
                break;
            }
            seen.insert(node, run_id);
            path.push(node);
            node = step(node);
        }
    }
    let mut cycle_costs_zero = true;
    let mut bounded = true;
    let mut offending_cycle = Vec::new();
    for cycle in &cycles {
        let total: Rational = cycle.iter().map(|&(x, _)| plant.cost(x).clone()).sum();
        let zero = cycle.iter().all(|&(x, _)| plant.cost(x).is_zero());
        if (!zero || total.is_positive()) && offending_cycle.is_empty() {
            offending_cycle = cycle.clone();
        }
        cycle_costs_zero &= zero;
        bounded &= !total.is_positive();
    }

    let runs = plant
        .initial_states()
        .iter()
        .map(|&x0| {
            let mut node = (x0, controller.initial);
            let mut sum = rational::zero();
            let mut running_sums = Vec::with_capacity(horizon + 1);
            for _ in 0..=horizon {
                sum += plant.cost(node.0);
                running_sums.push(sum.clone());
                node = step(node);
            }
            let tail_start = horizon - horizon / 4;
            ClosedLoopRun {
                x0,
                stabilized: running_sums[tail_start] == running_sums[horizon],
                running_sums,
            }
        })
        .collect();

    DeployReport {
        horizon,
        reachable: seen.len(),
        cycles: cycles.len(),
        cycle_costs_zero,
        bounded,
        offending_cycle,
        runs,
    }
}

/// `{2^k : −6 ≤ k ≤ 6}` in ascending order.
pub fn default_tau_grid() -> Vec<Rational> {
    (-6i32..=6)
        .map(|k| {
            if k < 0 {
                rational::ratio(1, 1 << (-k))
            } else {
                rational::int(1 << k)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TauAttempt {
    #[serde(with = "rational::as_str")]
    pub tau: Rational,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synthesis {
    pub attempts: Vec<TauAttempt>,
    /// Present when some `τ` converged.
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

/// Tries each `τ` in order and certifies the first converging policy.
pub fn search_tau(
    m: &Abstraction,
    codec: &CodecTable,
    weights: &CostWeights,
    gamma: &Extended,
    grid: &[Rational],
) -> Result<Synthesis, SynthError> {
    let dynamics = MhatDynamics::new(m, codec)?;
    let mut attempts = Vec::new();
    for tau in grid {
        let cost = StageCost::build(m, weights, tau, gamma)?;
        let result = value_iteration(&dynamics, &cost);
        attempts.push(TauAttempt {
            tau: tau.clone(),
            converged: result.policy().is_some(),
            iterations: result.iterations(),
        });
        if let ValueIteration::Converged { values, policy, .. } = result {
            let certificate = certify(&dynamics, &cost, &policy, m.window())?;
            return Ok(Synthesis {
                attempts,
                certificate: Some(certificate),
                values: Some(values.iter().map(rational::format).collect()),
            });
        }
    }
    Ok(Synthesis {
        attempts,
        certificate: None,
        values: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{build_abstraction, OutputPolicy};
    use crate::fixtures;
    use crate::gain::error_gain;
    use crate::plant::bundled;
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    fn lex(plant: &FinitePlant, i: usize) -> Abstraction {
        build_abstraction(plant, i, OutputPolicy::Lexicographic).unwrap()
    }

    #[test]
    fn zero_disturbance_follows_prediction() {
        let plant = bundled::ex1();
        let m = lex(&plant, 2);
        let d = MhatDynamics::new(&m, &CodecTable::minimal(2).unwrap()).unwrap();
        for q in 0..m.num_states() {
            for u in 0..2 {
                assert_eq!(d.next(q, u, 0), m.next(q, u, m.state(q).prediction));
            }
        }
    }

    #[test]
    fn unit_disturbance_flips_binary_output() {
        let plant = bundled::ex1();
        let m = lex(&plant, 1);
        let d = MhatDynamics::new(&m, &CodecTable::minimal(2).unwrap()).unwrap();
        let lo_a = m.find(&crate::plant::Snapshot::single(0, 0)).unwrap();
        let (lo, hi) = (0, 1);
        assert_eq!(m.state(lo_a).prediction, lo);
        assert_eq!(d.next(lo_a, 1, 1), m.next(lo_a, 1, hi));
    }

    #[test]
    fn single_output_plant_has_one_disturbance() {
        let plant = fixtures::constant_output();
        let m = lex(&plant, 1);
        let d = MhatDynamics::new(&m, &CodecTable::minimal(1).unwrap()).unwrap();
        assert_eq!(d.num_disturbances(), 1);
        for q in 0..m.num_states() {
            for u in 0..2 {
                assert_eq!(d.next(q, u, 0), m.next(q, u, 0));
            }
        }
    }

    #[test]
    fn stage_cost_by_substitution() {
        let plant = bundled::ex2();
        let m = lex(&plant, 1);
        let weights = CostWeights::defaults(1, 2);
        let cost = StageCost::build(&m, &weights, &int(1), &Extended::Finite(int(0))).unwrap();
        for q in 0..m.num_states() {
            assert_eq!(*cost.get(q, 0, 0), int(0));
            assert_eq!(*cost.get(q, 0, 1), int(1));
        }
        assert_eq!(
            StageCost::build(&m, &weights, &int(1), &Extended::Infinite),
            Err(SynthError::InfiniteGain)
        );
        assert!(matches!(
            StageCost::build(&m, &weights, &int(0), &Extended::Finite(int(0))),
            Err(SynthError::NonPositiveTau(_))
        ));
    }

    #[test]
    fn tau_scales_only_weight_terms() {
        let plant = bundled::ex1();
        let m = lex(&plant, 1);
        let weights = CostWeights::defaults(2, 2);
        let gamma = Extended::Finite(ratio(1, 3));
        let one = StageCost::build(&m, &weights, &int(1), &gamma).unwrap();
        let three = StageCost::build(&m, &weights, &int(3), &gamma).unwrap();
        for q in 0..m.num_states() {
            let perf = &m.state(q).perf_weight;
            for u in 0..2 {
                for w in 0..2 {
                    assert_eq!(three.get(q, u, w) + perf, (one.get(q, u, w) + perf) * int(3));
                }
            }
        }
    }

    #[test]
    fn ex1_stage_cost_table() {
        let plant = bundled::ex1();
        let m = lex(&plant, 1);
        let weights = CostWeights::defaults(2, 2);
        let gamma = error_gain(&plant, &m, &weights).unwrap().gamma;
        let g = gamma.finite().unwrap().clone();
        let cost = StageCost::build(&m, &weights, &int(1), &gamma).unwrap();
        for q in 0..m.num_states() {
            for u in 0..2 {
                for w in 0..2 {
                    let expected = int(w as i64) - &m.state(q).perf_weight - &g;
                    assert_eq!(*cost.get(q, u, w), expected);
                }
            }
        }
    }

    #[test]
    fn nonnegative_cost_converges_immediately() {
        let d = MhatDynamics::from_table(2, 2, 1, vec![1, 0, 0, 1]);
        let cost = StageCost::from_table(2, 1, vec![int(0), int(2), int(1), int(0)]);
        let r = value_iteration(&d, &cost);
        assert_eq!(r.iterations(), 1);
        let ValueIteration::Converged { values, policy, .. } = r else {
            panic!("expected convergence");
        };
        assert!(values.iter().all(|v| v.is_zero()));
        for phi in [policy, vec![1, 1], vec![0, 0]] {
            assert!(certify(&d, &cost, &phi, 1).unwrap().bounded_below);
        }
    }

    #[test]
    fn constant_negative_cost_diverges_at_bound() {
        let d = MhatDynamics::from_table(1, 1, 1, vec![0]);
        let cost = StageCost::from_table(1, 1, vec![int(-1)]);
        let r = value_iteration(&d, &cost);
        assert_eq!(
            r,
            ValueIteration::Diverged {
                state: 0,
                iterations: 3,
                bound: int(2)
            }
        );
        let c = certify(&d, &cost, &[0], 1).unwrap();
        assert!(!c.bounded_below);
        assert_eq!(c.witness, vec![CycleStep { state: 0, disturbance: 0 }]);
    }

    #[test]
    fn perturbed_policy_loses_certificate() {
        // input 0 stays in a costly loop, input 1 escapes to a free sink
        let d = MhatDynamics::from_table(2, 2, 1, vec![0, 1, 1, 1]);
        let cost = StageCost::from_table(2, 1, vec![int(-1), int(0), int(0), int(0)]);
        let r = value_iteration(&d, &cost);
        let policy = r.policy().unwrap().to_vec();
        assert_eq!(policy[0], 1);
        assert!(certify(&d, &cost, &policy, 1).unwrap().bounded_below);
        let mut bad = policy.clone();
        bad[0] = 0;
        let c = certify(&d, &cost, &bad, 1).unwrap();
        assert!(!c.bounded_below);
        assert_eq!(c.witness[0].state, 0);
    }

    #[test]
    fn exhausted_grid_on_adversarial_loop() {
        let d = MhatDynamics::from_table(1, 1, 1, vec![0]);
        let cost = StageCost::from_table(1, 1, vec![int(-1)]);
        for tau in default_tau_grid() {
            let scaled = cost.scaled(&tau);
            assert!(value_iteration(&d, &scaled).policy().is_none());
        }
    }

    #[test]
    fn ex3_pipeline_synthesizes_and_deploys() {
        let plant = bundled::ex3();
        let m = lex(&plant, 2);
        let weights = CostWeights::defaults(2, 2);
        let gamma = error_gain(&plant, &m, &weights).unwrap().gamma;
        assert!(gamma.is_zero());
        let codec = CodecTable::minimal(2).unwrap();
        let synthesis = search_tau(&m, &codec, &weights, &gamma, &default_tau_grid()).unwrap();
        let cert = synthesis.certificate.unwrap();
        assert!(cert.bounded_below);
        let k = ControllerDfm::new(&m, &cert.policy).unwrap();
        let report = deploy_and_check(&plant, &k, 200);
        assert!(report.bounded && report.cycle_costs_zero);
        assert!(report.runs.iter().all(|r| r.stabilized));
        let reloaded = ControllerDfm::from_json(&k.to_json()).unwrap();
        assert_eq!(reloaded, k);
    }

    #[test]
    fn uncontrolled_ex1_accumulates_cost() {
        let plant = bundled::ex1();
        let m = lex(&plant, 1);
        let k = ControllerDfm::new(&m, &vec![0; m.num_states()]).unwrap();
        let report = deploy_and_check(&plant, &k, 40);
        assert!(!report.bounded);
        let sums = &report.runs[0].running_sums;
        assert_eq!(&sums[40] - &sums[30], int(30));
    }

    #[test]
    fn zero_cost_plant_is_bounded() {
        let plant = bundled::ex2();
        let m = lex(&plant, 1);
        let k = ControllerDfm::new(&m, &vec![0; m.num_states()]).unwrap();
        let report = deploy_and_check(&plant, &k, 20);
        assert!(report.bounded && report.cycle_costs_zero);
    }

    #[test]
    fn tau_grid_is_ascending_powers_of_two() {
        let grid = default_tau_grid();
        assert_eq!(grid.len(), 13);
        assert_eq!(grid[0], ratio(1, 64));
        assert_eq!(grid[6], int(1));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn malformed_controller_rejected() {
        let plant = bundled::ex1();
        let m = lex(&plant, 1);
        let mut k = ControllerDfm::new(&m, &vec![0; m.num_states()]).unwrap();
        k.action[0] = 5;
        assert!(ControllerDfm::from_json(&k.to_json()).is_err());
    }

    fn arb_game() -> impl Strategy<Value = (MhatDynamics, StageCost)> {
        (1usize..=4, 1usize..=2, 1usize..=2).prop_flat_map(|(n, k, d)| {
            let size = n * k * d;
            (
                proptest::collection::vec(0..n, size),
                proptest::collection::vec(-2i64..=3, size),
            )
                .prop_map(move |(next, sigma)| {
                    (
                        MhatDynamics::from_table(n, k, d, next),
                        StageCost::from_table(k, d, sigma.into_iter().map(int).collect()),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn certificate_agrees_with_value_iteration((d, cost) in arb_game()) {
            match value_iteration(&d, &cost) {
                ValueIteration::Converged { policy, values, .. } => {
                    prop_assert!(certify(&d, &cost, &policy, 1).unwrap().bounded_below);
                    prop_assert_eq!(bellman_step(&d, &cost, &values), values);
                }
                ValueIteration::Diverged { .. } => {
                    // no policy keeps every cycle nonnegative
                    let k = d.num_inputs();
                    let n = d.num_states();
                    let mut policy = vec![0usize; n];
                    loop {
                        prop_assert!(!certify(&d, &cost, &policy, 1).unwrap().bounded_below);
                        let mut i = 0;
                        while i < n && policy[i] + 1 == k {
                            policy[i] = 0;
                            i += 1;
                        }
                        if i == n {
                            break;
                        }
                        policy[i] += 1;
                    }
                }
            }
        }

        #[test]
        fn divergence_keeps_growing((d, cost) in arb_game()) {
            if let ValueIteration::Diverged { iterations, .. } = value_iteration(&d, &cost) {
                let mut values = vec![rational::zero(); d.num_states()];
                for _ in 0..iterations {
                    values = bellman_step(&d, &cost, &values);
                }
                let mut later = values.clone();
                for _ in 0..d.num_states() {
                    later = bellman_step(&d, &cost, &later);
                }
                prop_assert!(later.iter().zip(&values).any(|(a, b)| a > b));
            }
        }

        #[test]
        fn policy_invariant_under_cost_scaling((d, cost) in arb_game(), k in 1i64..5) {
            let base = value_iteration(&d, &cost);
            let scaled = value_iteration(&d, &cost.scaled(&int(k)));
            prop_assert_eq!(base.policy(), scaled.policy());
        }
    }
}
