//! Exact rho/mu gains via maximum cycle ratios.
//!
//! A gain-stability question on a finite deterministic system reduces to its
//! cycles: `γ` works iff every reachable cycle has `Σ(γ·rho − mu) ≥ 0`, so the
//! infimal `γ` is the largest `Σmu / Σrho` over reachable cycles, or `+inf`
//! when a rho-free cycle carries positive mu. Finite prefixes never matter.

use std::collections::{BTreeMap, VecDeque};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{Abstraction, ROOT};
use crate::plant::{FinitePlant, RationalText};
use crate::rational::{self, Extended, Rational};

/// Default cap on simple cycles visited by [`max_cycle_ratio_brute_force`].
pub const DEFAULT_CYCLE_CAP: usize = 200_000;

#[derive(Debug, Error)]
pub enum GainError {
    #[error("alphabet mismatch between plant and abstraction: {0}")]
    AlphabetMismatch(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("weights document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("more than {0} simple cycles; brute-force enumeration aborted")]
    TooManyCycles(usize),
}

/// Per-symbol cost tables `ρ_Δ` (indexed by input) and `μ_Δ` (indexed by
/// disturbance symbol).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostWeights {
    #[serde(with = "rational::vec_as_str")]
    pub rho: Vec<Rational>,
    #[serde(with = "rational::vec_as_str")]
    pub mu_delta: Vec<Rational>,
}

/// On-disk form: `rho` keyed by input label, `mu_delta` listed by `w`.
/// Missing entries take the default values.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsDocument {
    #[serde(default)]
    pub rho: BTreeMap<String, RationalText>,
    #[serde(default)]
    pub mu_delta: Option<Vec<RationalText>>,
}

impl CostWeights {
    /// `ρ_Δ ≡ 1` and `μ_Δ(w) = [w ≠ 0]`.
    pub fn defaults(inputs: usize, outputs: usize) -> Self {
        Self {
            rho: vec![rational::one(); inputs],
            mu_delta: (0..outputs)
                .map(|w| if w == 0 { rational::zero() } else { rational::one() })
                .collect(),
        }
    }

    pub fn parse(text: &str, input_labels: &[String], outputs: usize) -> Result<Self, GainError> {
        let doc: WeightsDocument = serde_json::from_str(text)?;
        Self::from_document(doc, input_labels, outputs)
    }

    pub fn from_document(
        doc: WeightsDocument,
        input_labels: &[String],
        outputs: usize,
    ) -> Result<Self, GainError> {
        let mut weights = Self::defaults(input_labels.len(), outputs);
        for (label, value) in doc.rho {
            let u = input_labels
                .iter()
                .position(|l| *l == label)
                .ok_or_else(|| GainError::InvalidWeights(format!("unknown input `{label}` in rho")))?;
            weights.rho[u] = value.0;
        }
        if let Some(mu) = doc.mu_delta {
            if mu.len() != outputs {
                return Err(GainError::InvalidWeights(format!(
                    "mu_delta has {} entries, expected {outputs}",
                    mu.len()
                )));
            }
            weights.mu_delta = mu.into_iter().map(|v| v.0).collect();
        }
        weights.validate(input_labels.len(), outputs)?;
        Ok(weights)
    }

    pub fn to_document(&self, input_labels: &[String]) -> WeightsDocument {
        WeightsDocument {
            rho: input_labels
                .iter()
                .cloned()
                .zip(self.rho.iter().cloned().map(RationalText))
                .collect(),
            mu_delta: Some(self.mu_delta.iter().cloned().map(RationalText).collect()),
        }
    }

    pub fn validate(&self, inputs: usize, outputs: usize) -> Result<(), GainError> {
        if self.rho.len() != inputs {
            return Err(GainError::InvalidWeights(format!(
                "rho has {} entries, expected {inputs}",
                self.rho.len()
            )));
        }
        if self.mu_delta.len() != outputs {
            return Err(GainError::InvalidWeights(format!(
                "mu_delta has {} entries, expected {outputs}",
                self.mu_delta.len()
            )));
        }
        if self.rho.iter().chain(&self.mu_delta).any(|v| v.is_negative()) {
            return Err(GainError::InvalidWeights("costs must be nonnegative".into()));
        }
        Ok(())
    }

    /// `μ_Δ(0) = 0` and `μ_Δ(w) > 0` otherwise.
    pub fn is_positive_definite(&self) -> bool {
        self.mu_delta
            .iter()
            .enumerate()
            .all(|(w, v)| if w == 0 { v.is_zero() } else { v.is_positive() })
    }

    /// `max_w μ_Δ(w)`.
    pub fn max_mu(&self) -> Rational {
        self.mu_delta.iter().max().cloned().unwrap_or_else(rational::zero)
    }

    pub fn scaled(&self, factor: &Rational) -> Self {
        Self {
            rho: self.rho.iter().map(|v| v * factor).collect(),
            mu_delta: self.mu_delta.iter().map(|v| v * factor).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub label: String,
    /// Plant state for product graphs.
    pub plant_state: Option<usize>,
    pub abstract_state: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub from: usize,
    pub to: usize,
    pub input: usize,
    /// Edge label in exports, `"u"` or `"u,y"`.
    pub label: String,
    #[serde(with = "rational::as_str")]
    pub rho: Rational,
    #[serde(with = "rational::as_str")]
    pub mu: Rational,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<WeightedEdge>,
    pub initial: Vec<usize>,
}

impl WeightedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, label: impl Into<String>) -> usize {
        let abstract_state = self.nodes.len();
        self.nodes.push(GraphNode {
            label: label.into(),
            plant_state: None,
            abstract_state,
        });
        abstract_state
    }

    pub fn add_edge(&mut self, from: usize, to: usize, rho: Rational, mu: Rational) -> usize {
        self.edges.push(WeightedEdge {
            from,
            to,
            input: 0,
            label: String::new(),
            rho,
            mu,
        });
        self.edges.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            out[edge.from].push(e);
        }
        out
    }

    /// Nodes reachable from the initial set.
    pub fn reachable(&self) -> Vec<bool> {
        let out = self.out_edges();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in &self.initial {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(n) = queue.pop_front() {
            for &e in &out[n] {
                let to = self.edges[e].to;
                if !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        seen
    }

    /// `(Σrho, Σmu)` over a list of edge indices.
    pub fn cycle_costs(&self, edges: &[usize]) -> (Rational, Rational) {
        let mut rho = rational::zero();
        let mut mu = rational::zero();
        for &e in edges {
            rho += &self.edges[e].rho;
            mu += &self.edges[e].mu;
        }
        (rho, mu)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph weighted {\n  rankdir=LR;\n");
        for (n, node) in self.nodes.iter().enumerate() {
            let shape = if self.initial.contains(&n) { "doublecircle" } else { "circle" };
            out.push_str(&format!(
                "  n{n} [shape={shape}, label=\"{}\"];\n",
                node.label.replace('"', "\\\"")
            ));
        }
        for edge in &self.edges {
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{} ({}/{})\"];\n",
                edge.from,
                edge.to,
                edge.label,
                rational::format(&edge.rho),
                rational::format(&edge.mu)
            ));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMethod {
    Parametric,
    BruteForce,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainResult {
    pub gamma: Extended,
    /// Witness cycle as a node list; the first node is not repeated.
    pub witness: Vec<usize>,
    pub witness_edges: Vec<usize>,
    pub method: GainMethod,
}

impl GainResult {
    pub fn witness_labels(&self, graph: &WeightedGraph) -> Vec<String> {
        self.witness.iter().map(|&n| graph.nodes[n].label.clone()).collect()
    }
}

fn check_alphabets(plant: &FinitePlant, m: &Abstraction) -> Result<(), GainError> {
    if plant.input_labels() != m.input_labels() {
        return Err(GainError::AlphabetMismatch("inputs differ".into()));
    }
    if plant.output_labels() != m.output_labels() {
        return Err(GainError::AlphabetMismatch("outputs differ".into()));
    }
    if plant.state_labels() != m.plant_state_labels() {
        return Err(GainError::AlphabetMismatch("state sets differ".into()));
    }
    Ok(())
}

/// The error system `Δ_i`: plant and `M_i` driven by the same input, with
/// mu-cost `μ_Δ(β(g_i(q), g(x)))` on each edge.
pub fn error_graph(
    plant: &FinitePlant,
    m: &Abstraction,
    weights: &CostWeights,
) -> Result<WeightedGraph, GainError> {
    check_alphabets(plant, m)?;
    weights.validate(plant.num_inputs(), plant.num_outputs())?;
    let p = plant.num_outputs();
    let mut graph = WeightedGraph::new();
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    let mut intern = |graph: &mut WeightedGraph, queue: &mut VecDeque<(usize, usize)>, x: usize, q: usize| {
        *index.entry((x, q)).or_insert_with(|| {
            graph.nodes.push(GraphNode {
                label: format!("({}, {})", plant.state_labels()[x], m.state_label(q)),
                plant_state: Some(x),
                abstract_state: q,
            });
            queue.push_back((x, q));
            graph.nodes.len() - 1
        })
    };
    for &x0 in plant.initial_states() {
        let n = intern(&mut graph, &mut queue, x0, ROOT);
        if !graph.initial.contains(&n) {
            graph.initial.push(n);
        }
    }
    while let Some((x, q)) = queue.pop_front() {
        let from = intern(&mut graph, &mut queue, x, q);
        let y = plant.output(x);
        let w = (m.state(q).prediction + p - y) % p;
        for u in 0..plant.num_inputs() {
            let to = intern(&mut graph, &mut queue, plant.step(x, u), m.next(q, u, y));
            graph.edges.push(WeightedEdge {
                from,
                to,
                input: u,
                label: plant.input_labels()[u].clone(),
                rho: weights.rho[u].clone(),
                mu: weights.mu_delta[w].clone(),
            });
        }
    }
    Ok(graph)
}

/// `e(q)`: the largest disturbance cost if `q` is ambiguous, else 0.
pub fn e_output(m: &Abstraction, weights: &CostWeights, q: usize) -> Rational {
    if m.state(q).is_ambiguous() {
        weights.max_mu()
    } else {
        rational::zero()
    }
}

/// Graph on the states of `M_i` with every `(u, y)` edge, rho-cost `ρ_Δ(u)`
/// and mu-cost `e(q)` of the source state.
pub fn e_output_graph(m: &Abstraction, weights: &CostWeights) -> Result<WeightedGraph, GainError> {
    weights.validate(m.num_inputs(), m.num_outputs())?;
    let mut graph = WeightedGraph::new();
    for q in 0..m.num_states() {
        graph.nodes.push(GraphNode {
            label: m.state_label(q),
            plant_state: None,
            abstract_state: q,
        });
    }
    graph.initial.push(ROOT);
    for q in 0..m.num_states() {
        let e = e_output(m, weights, q);
        for u in 0..m.num_inputs() {
            for y in 0..m.num_outputs() {
                graph.edges.push(WeightedEdge {
                    from: q,
                    to: m.next(q, u, y),
                    input: u,
                    label: format!("{},{}", m.input_labels()[u], m.output_labels()[y]),
                    rho: weights.rho[u].clone(),
                    mu: e.clone(),
                });
            }
        }
    }
    Ok(graph)
}

/// `γ̂_i`, an upper bound on the error gain of `M_i`.
pub fn gain_upper_bound(m: &Abstraction, weights: &CostWeights) -> Result<GainResult, GainError> {
    Ok(max_cycle_ratio(&e_output_graph(m, weights)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroReduction {
    pub finite: bool,
    /// Offending cycle of abstract states when `finite` is false.
    pub certificate: Vec<usize>,
}

/// Keeps only edges whose input has `ρ_Δ(u) = 0` and looks for a cycle
/// through an ambiguous state (`e(q) > 0`).
pub fn zero_reduction_finite(m: &Abstraction, weights: &CostWeights) -> Result<ZeroReduction, GainError> {
    weights.validate(m.num_inputs(), m.num_outputs())?;
    let free: Vec<usize> = (0..m.num_inputs()).filter(|&u| weights.rho[u].is_zero()).collect();
    let n = m.num_states();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|q| {
            let mut next: Vec<usize> = free
                .iter()
                .flat_map(|&u| (0..m.num_outputs()).map(move |y| (u, y)))
                .map(|(u, y)| m.next(q, u, y))
                .collect();
            next.sort_unstable();
            next.dedup();
            next
        })
        .collect();
    for q in 0..n {
        if !e_output(m, weights, q).is_positive() {
            continue;
        }
        // BFS from q's successors back to q
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for &s in &succ[q] {
            if !seen[s] {
                seen[s] = true;
                parent[s] = Some(q);
                queue.push_back(s);
            }
        }
        while let Some(r) = queue.pop_front() {
            if r == q {
                let mut cycle = vec![q];
                let mut cur = parent[q].expect("reached q through a successor");
                while cur != q {
                    cycle.push(cur);
                    cur = parent[cur].expect("parent chain ends at q");
                }
                cycle[1..].reverse();
                return Ok(ZeroReduction {
                    finite: false,
                    certificate: cycle,
                });
            }
            for &s in &succ[r] {
                if !seen[s] {
                    seen[s] = true;
                    parent[s] = Some(r);
                    queue.push_back(s);
                }
            }
        }
    }
    Ok(ZeroReduction {
        finite: true,
        certificate: Vec::new(),
    })
}

/// Integer-scaled copies of the edge costs with a common denominator, so
/// that ratios are unchanged and relaxation avoids rational normalization.
struct ScaledCosts {
    rho: Vec<BigInt>,
    mu: Vec<BigInt>,
}

impl ScaledCosts {
    fn new(graph: &WeightedGraph) -> Self {
        let denom = graph
            .edges
            .iter()
            .flat_map(|e| [e.rho.denom(), e.mu.denom()])
            .fold(BigInt::one(), |acc, d| acc.lcm(d));
        let scale = |v: &Rational| (v * Rational::from_integer(denom.clone())).to_integer();
        Self {
            rho: graph.edges.iter().map(|e| scale(&e.rho)).collect(),
            mu: graph.edges.iter().map(|e| scale(&e.mu)).collect(),
        }
    }
}

/// Bellman-Ford from a virtual source joined to every active node. Returns
/// the edges of a negative cycle of the predecessor graph, in walk order.
fn negative_cycle(graph: &WeightedGraph, active: &[bool], weight: &[BigInt]) -> Option<Vec<usize>> {
    let n = graph.nodes.len();
    let live: Vec<usize> = (0..graph.edges.len())
        .filter(|&e| active[graph.edges[e].from] && active[graph.edges[e].to])
        .collect();
    let count = active.iter().filter(|&&a| a).count();
    let mut dist = vec![BigInt::zero(); n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut last = None;
    for _pass in 0..=count {
        last = None;
        for &e in &live {
            let edge = &graph.edges[e];
            let candidate = &dist[edge.from] + &weight[e];
            if candidate < dist[edge.to] {
                dist[edge.to] = candidate;
                pred[edge.to] = Some(e);
                last = Some(edge.to);
            }
        }
        last?;
    }
    let mut v = last.expect("relaxation in final pass");
    for _ in 0..count {
        v = graph.edges[pred[v].expect("predecessor chain")].from;
    }
    let start = v;
    let mut cycle = Vec::new();
    loop {
        let e = pred[v].expect("predecessor chain");
        cycle.push(e);
        v = graph.edges[e].from;
        if v == start {
            break;
        }
    }
    cycle.reverse();
    Some(cycle)
}

fn cycle_nodes(graph: &WeightedGraph, edges: &[usize]) -> Vec<usize> {
    edges.iter().map(|&e| graph.edges[e].from).collect()
}

/// Shortest edge path from `from` to `to` using edges accepted by `keep`.
fn edge_path(
    graph: &WeightedGraph,
    out: &[Vec<usize>],
    from: usize,
    to: usize,
    keep: impl Fn(usize) -> bool,
) -> Option<Vec<usize>> {
    let mut via: Vec<Option<usize>> = vec![None; graph.nodes.len()];
    let mut seen = vec![false; graph.nodes.len()];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            let mut path = Vec::new();
            let mut cur = to;
            while cur != from {
                let e = via[cur].unwrap();
                path.push(e);
                cur = graph.edges[e].from;
            }
            path.reverse();
            return Some(path);
        }
        for &e in &out[n] {
            let next = graph.edges[e].to;
            if keep(e) && !seen[next] {
                seen[next] = true;
                via[next] = Some(e);
                queue.push_back(next);
            }
        }
    }
    None
}

/// Edges whose endpoints share a strongly connected component of the
/// subgraph formed by `keep` edges between active nodes.
fn edges_on_cycles(graph: &WeightedGraph, active: &[bool], keep: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(graph.nodes.len(), graph.edges.len());
    let ids: Vec<_> = (0..graph.nodes.len()).map(|_| g.add_node(())).collect();
    let live: Vec<usize> = (0..graph.edges.len())
        .filter(|&e| keep(e) && active[graph.edges[e].from] && active[graph.edges[e].to])
        .collect();
    for &e in &live {
        g.add_edge(ids[graph.edges[e].from], ids[graph.edges[e].to], ());
    }
    let mut component = vec![usize::MAX; graph.nodes.len()];
    for (c, scc) in tarjan_scc(&g).into_iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    live.into_iter()
        .filter(|&e| component[graph.edges[e].from] == component[graph.edges[e].to])
        .collect()
}

/// Closes the cycle through edge `e` with a shortest return path.
fn cycle_through(
    graph: &WeightedGraph,
    out: &[Vec<usize>],
    e: usize,
    keep: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let edge = &graph.edges[e];
    let mut cycle = vec![e];
    cycle.extend(edge_path(graph, out, edge.to, edge.from, keep).expect("edge lies on a cycle"));
    cycle
}

/// Maximum of `Σmu / Σrho` over cycles reachable from the initial nodes.
///
/// Rho-free cycles with positive mu give `+inf`. Otherwise the value is
/// found by parametric negative-cycle search: starting from the ratio of any
/// positive-mu cycle, Bellman-Ford under weight `γ·rho − mu` either proves
/// no cycle beats `γ` or returns one with a strictly larger ratio, which
/// becomes the next `γ`. Candidates are simple-cycle ratios, so the loop
/// ends; the last cycle is the witness. All arithmetic is exact.
pub fn max_cycle_ratio(graph: &WeightedGraph) -> GainResult {
    let active = graph.reachable();
    let out = graph.out_edges();
    let zero_rho = |e: usize| graph.edges[e].rho.is_zero();
    let result = |gamma, edges: Vec<usize>| GainResult {
        gamma,
        witness: cycle_nodes(graph, &edges),
        witness_edges: edges,
        method: GainMethod::Parametric,
    };

    if let Some(&e) = edges_on_cycles(graph, &active, zero_rho)
        .iter()
        .find(|&&e| graph.edges[e].mu.is_positive())
    {
        return result(Extended::Infinite, cycle_through(graph, &out, e, zero_rho));
    }

    let cyclic = edges_on_cycles(graph, &active, |_| true);
    assert!(
        !cyclic.is_empty(),
        "reachable graph has no cycle; a total deterministic machine always has one"
    );
    let Some(&start) = cyclic.iter().find(|&&e| graph.edges[e].mu.is_positive()) else {
        return result(Extended::Finite(rational::zero()), cycle_through(graph, &out, cyclic[0], |_| true));
    };

    let costs = ScaledCosts::new(graph);
    let ratio = |edges: &[usize]| {
        let (rho, mu) = edges.iter().fold((BigInt::zero(), BigInt::zero()), |(r, m), &e| {
            (r + &costs.rho[e], m + &costs.mu[e])
        });
        Rational::new(mu, rho)
    };
    let mut witness = cycle_through(graph, &out, start, |_| true);
    let mut gamma = ratio(&witness);
    loop {
        let (a, b) = (gamma.numer().clone(), gamma.denom().clone());
        let weight: Vec<BigInt> = (0..graph.edges.len())
            .map(|e| &a * &costs.rho[e] - &b * &costs.mu[e])
            .collect();
        match negative_cycle(graph, &active, &weight) {
            None => return result(Extended::Finite(gamma), witness),
            Some(cycle) => {
                let next = ratio(&cycle);
                assert!(next > gamma, "negative cycle must improve the ratio");
                gamma = next;
                witness = cycle;
            }
        }
    }
}

/// Same quantity as [`max_cycle_ratio`] by enumerating every simple cycle of
/// the reachable subgraph. Aborts after `cap` cycles.
pub fn max_cycle_ratio_brute_force(graph: &WeightedGraph, cap: usize) -> Result<GainResult, GainError> {
    let active = graph.reachable();
    let out = graph.out_edges();
    let n = graph.nodes.len();
    let mut best: Option<(Extended, Vec<usize>)> = None;
    let mut count = 0usize;
    let mut on_path = vec![false; n];
    let mut path: Vec<usize> = Vec::new();

    struct Search<'a> {
        graph: &'a WeightedGraph,
        out: &'a [Vec<usize>],
        active: &'a [bool],
        cap: usize,
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        s: &Search<'_>,
        start: usize,
        node: usize,
        on_path: &mut [bool],
        path: &mut Vec<usize>,
        count: &mut usize,
        best: &mut Option<(Extended, Vec<usize>)>,
    ) -> Result<(), GainError> {
        for &e in &s.out[node] {
            let to = s.graph.edges[e].to;
            if !s.active[to] || to < start {
                continue;
            }
            if to == start {
                path.push(e);
                *count += 1;
                if *count > s.cap {
                    return Err(GainError::TooManyCycles(s.cap));
                }
                let (rho, mu) = s.graph.cycle_costs(path);
                let value = if rho.is_zero() {
                    if mu.is_positive() {
                        Extended::Infinite
                    } else {
                        Extended::Finite(rational::zero())
                    }
                } else {
                    Extended::Finite(mu / rho)
                };
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    *best = Some((value, path.clone()));
                }
                path.pop();
            } else if !on_path[to] {
                on_path[to] = true;
                path.push(e);
                dfs(s, start, to, on_path, path, count, best)?;
                path.pop();
                on_path[to] = false;
            }
        }
        Ok(())
    }

    let search = Search {
        graph,
        out: &out,
        active: &active,
        cap,
    };
    for start in (0..n).filter(|&v| active[v]) {
        on_path[start] = true;
        dfs(&search, start, start, &mut on_path, &mut path, &mut count, &mut best)?;
        on_path[start] = false;
    }
    let (gamma, edges) = best.expect("reachable graph has no cycle");
    Ok(GainResult {
        gamma,
        witness: cycle_nodes(graph, &edges),
        witness_edges: edges,
        method: GainMethod::BruteForce,
    })
}

/// Whether every reachable cycle has `Σ(γ·rho − mu) ≥ 0`.
pub fn check_gain_stability(graph: &WeightedGraph, gamma: &Rational) -> bool {
    let active = graph.reachable();
    let costs = ScaledCosts::new(graph);
    let (a, b) = (gamma.numer(), gamma.denom());
    let weight: Vec<BigInt> = (0..graph.edges.len())
        .map(|e| a * &costs.rho[e] - b * &costs.mu[e])
        .collect();
    negative_cycle(graph, &active, &weight).is_none()
}

/// `γ_i` of the error system for `M_i`.
pub fn error_gain(plant: &FinitePlant, m: &Abstraction, weights: &CostWeights) -> Result<GainResult, GainError> {
    Ok(max_cycle_ratio(&error_graph(plant, m, weights)?))
}
