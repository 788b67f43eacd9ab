//! Shared helpers for integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhomu_core::plant::FinitePlant;
use rhomu_core::rational::int;

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

/// A random plant with at most `max_states` states, `max_inputs` inputs and
/// `max_outputs` outputs. `h(x)` takes values in 0..=3 and `μ(v) = v`.
pub fn random_plant(seed: u64, max_states: usize, max_inputs: usize, max_outputs: usize) -> FinitePlant {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_states);
    let m = rng.gen_range(1..=max_inputs);
    let p = rng.gen_range(1..=max_outputs);
    let next = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0..n)).collect()).collect();
    let sensor = (0..n).map(|_| rng.gen_range(0..p)).collect();
    let perf = (0..n).map(|_| int(rng.gen_range(0..=3))).collect();
    let mu = (0..=3).map(|v| (int(v), int(v))).collect();
    FinitePlant::from_tables(
        format!("random-{seed}"),
        labels("x", n),
        labels("u", m),
        labels("y", p),
        next,
        sensor,
        perf,
        mu,
        None,
    )
    .expect("generated tables are consistent")
}

/// One input, three outputs, and a window `(A|a)` whose older extensions
/// have pairwise-but-not-jointly intersecting output sets.
pub const NESTING_CONFLICT: &str = r#"{
  "name": "nesting-conflict",
  "states": ["a0","a1","a2","a3","a4","a5","b0","b1","c0","c1"],
  "inputs": ["a"],
  "outputs": ["A","B","C"],
  "f": {
    "a0": {"a": "b0"}, "a1": {"a": "c0"}, "a2": {"a": "a4"}, "a3": {"a": "b1"},
    "a4": {"a": "a5"}, "a5": {"a": "c1"}, "b0": {"a": "a0"}, "b1": {"a": "a1"},
    "c0": {"a": "a2"}, "c1": {"a": "a3"}
  },
  "g": {
    "a0": "A", "a1": "A", "a2": "A", "a3": "A", "a4": "A", "a5": "A",
    "b0": "B", "b1": "B", "c0": "C", "c1": "C"
  },
  "h": {
    "a0": 0, "a1": 0, "a2": 0, "a3": 0, "a4": 0, "a5": 0,
    "b0": 0, "b1": 0, "c0": 0, "c1": 0
  },
  "mu": {"0": 0}
}"#;
