//! Small hand-built plants shared by unit tests.

use crate::plant::FinitePlant;
use crate::rational::int;

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// One input, three outputs. The window `(A|a)` has `Y = {A,B,C}` while its
/// three extensions by an older pair have `Y` sets `{B,C}`, `{A,B}` and
/// `{A,C}`, so no output assignment is nested.
pub fn nesting_conflict() -> FinitePlant {
    // a0..a5 -> A, b0 b1 -> B, c0 c1 -> C
    let names = ["a0", "a1", "a2", "a3", "a4", "a5", "b0", "b1", "c0", "c1"];
    let ix = |n: &str| names.iter().position(|&s| s == n).unwrap();
    let succ = [
        ("a0", "b0"),
        ("a1", "c0"),
        ("a2", "a4"),
        ("a3", "b1"),
        ("a4", "a5"),
        ("a5", "c1"),
        ("b0", "a0"),
        ("b1", "a1"),
        ("c0", "a2"),
        ("c1", "a3"),
    ];
    let mut next = vec![vec![0]; names.len()];
    for (from, to) in succ {
        next[ix(from)] = vec![ix(to)];
    }
    let sensor = names
        .iter()
        .map(|n| match &n[..1] {
            "a" => 0,
            "b" => 1,
            _ => 2,
        })
        .collect();
    FinitePlant::from_tables(
        "nesting-conflict",
        labels(&names),
        labels(&["a"]),
        labels(&["A", "B", "C"]),
        next,
        sensor,
        vec![int(0); names.len()],
        vec![(int(0), int(0))],
        None,
    )
    .unwrap()
}

/// Two states with one output symbol: every prediction is correct.
pub fn constant_output() -> FinitePlant {
    FinitePlant::from_tables(
        "constant",
        labels(&["0", "1"]),
        labels(&["a", "b"]),
        labels(&["y"]),
        vec![vec![1, 0], vec![0, 1]],
        vec![0, 0],
        vec![int(0), int(1)],
        vec![(int(0), int(0)), (int(1), int(1))],
        None,
    )
    .unwrap()
}
