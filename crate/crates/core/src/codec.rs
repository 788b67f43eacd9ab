//! Disturbance codec `(β, α)` over a sensor alphabet of size `p`.
//!
//! The encoder maps a predicted output `ỹ` and the measured output `y` to a
//! disturbance symbol `w = β(ỹ, y)`; the decoder recovers `y = α(ỹ, w)`. The
//! built-in codec is the cyclic Latin square `β(y_i, y_j) = (i − j) mod p`,
//! which uses the smallest disturbance alphabet for which a decoder exists.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest `p` accepted by [`verify_minimality`] unless a larger bound is
/// requested explicitly.
pub const DEFAULT_SEARCH_BOUND: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("alphabet size must be at least 1")]
    EmptyAlphabet,
    #[error("output index {index} outside 1..={p}")]
    OutputOutOfRange { index: usize, p: usize },
    #[error("disturbance symbol {w} outside 0..{size}")]
    DisturbanceOutOfRange { w: usize, size: usize },
    #[error("minimality search needs p >= 2 (got {0})")]
    TooSmall(usize),
    #[error("minimality search for p = {p} exceeds the exhaustive bound {bound}; search space too large")]
    SearchTooLarge { p: usize, bound: usize },
    #[error("codec table row {row} has {len} entries, expected {p}")]
    RaggedTable { row: usize, len: usize, p: usize },
}

/// A disturbance symbol `w ∈ {0, …, |W|−1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Disturbance(pub usize);

/// Encoder `β(ỹ, y)` with 1-based output indices, using the minimal codec.
pub fn beta(ytilde: usize, y: usize, p: usize) -> Result<Disturbance, CodecError> {
    check_output(ytilde, p)?;
    check_output(y, p)?;
    Ok(Disturbance((ytilde + p - y) % p))
}

/// Decoder `α(ỹ, w)` with 1-based output indices. `None` is the decode
/// failure `ε`, which the minimal codec never produces.
pub fn alpha(ytilde: usize, w: Disturbance, p: usize) -> Result<Option<usize>, CodecError> {
    check_output(ytilde, p)?;
    if w.0 >= p {
        return Err(CodecError::DisturbanceOutOfRange { w: w.0, size: p });
    }
    Ok(CodecTable::minimal(p)?
        .decode(ytilde - 1, w.0)
        .map(|y| y + 1))
}

fn check_output(index: usize, p: usize) -> Result<(), CodecError> {
    if p == 0 {
        return Err(CodecError::EmptyAlphabet);
    }
    if index == 0 || index > p {
        return Err(CodecError::OutputOutOfRange { index, p });
    }
    Ok(())
}

/// An explicit encoder table over 0-based output indices. The decoder is
/// derived from it: `α(ỹ, w)` is the first `y` with `β(ỹ, y) = w`, or `ε`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecTable {
    p: usize,
    disturbances: usize,
    table: Vec<Vec<usize>>,
}

impl CodecTable {
    pub fn minimal(p: usize) -> Result<Self, CodecError> {
        if p == 0 {
            return Err(CodecError::EmptyAlphabet);
        }
        let table = (0..p)
            .map(|pred| (0..p).map(|y| (pred + p - y) % p).collect())
            .collect();
        Ok(Self {
            p,
            disturbances: p,
            table,
        })
    }

    /// Builds a user-supplied table; `disturbances` is `|W|`.
    pub fn from_table(table: Vec<Vec<usize>>, disturbances: usize) -> Result<Self, CodecError> {
        let p = table.len();
        if p == 0 {
            return Err(CodecError::EmptyAlphabet);
        }
        for (row, entries) in table.iter().enumerate() {
            if entries.len() != p {
                return Err(CodecError::RaggedTable {
                    row,
                    len: entries.len(),
                    p,
                });
            }
            if let Some(&w) = entries.iter().find(|&&w| w >= disturbances) {
                return Err(CodecError::DisturbanceOutOfRange {
                    w,
                    size: disturbances,
                });
            }
        }
        Ok(Self {
            p,
            disturbances,
            table,
        })
    }

    pub fn outputs(&self) -> usize {
        self.p
    }

    /// `|W|`.
    pub fn disturbances(&self) -> usize {
        self.disturbances
    }

    pub fn encode(&self, predicted: usize, actual: usize) -> usize {
        self.table[predicted][actual]
    }

    pub fn decode(&self, predicted: usize, w: usize) -> Option<usize> {
        self.table[predicted].iter().position(|&entry| entry == w)
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.table
    }

    /// Whether `α(ỹ, β(ỹ, y)) = y` for every pair.
    pub fn identity_holds(&self) -> bool {
        (0..self.p).all(|pred| (0..self.p).all(|y| self.decode(pred, self.encode(pred, y)) == Some(y)))
    }

    /// The table as CSV, one row per predicted output.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.table {
            let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub p: usize,
    pub identity_holds: bool,
    pub smaller_codec_exists: bool,
    /// Candidate row pairs `(β(ỹ,·), α(ỹ,·))` examined by the search.
    pub candidates_examined: u64,
}

pub fn verify_minimality(p: usize) -> Result<MinimalityReport, CodecError> {
    verify_minimality_with_bound(p, DEFAULT_SEARCH_BOUND)
}

/// Exhaustive search for a codec with `|W| = p − 1`.
///
/// A pair `(β, α)` satisfies the identity iff, for each `ỹ`, its row pair
/// `(β(ỹ,·), α(ỹ,·))` does; the full product space is therefore covered by
/// enumerating every row pair for every `ỹ`.
pub fn verify_minimality_with_bound(p: usize, bound: usize) -> Result<MinimalityReport, CodecError> {
    if p < 2 {
        return Err(CodecError::TooSmall(p));
    }
    if p > bound {
        return Err(CodecError::SearchTooLarge { p, bound });
    }
    let identity_holds = CodecTable::minimal(p)?.identity_holds();
    let small = p - 1;
    let mut examined = 0u64;
    let mut every_row_solvable = true;
    for _pred in 0..p {
        let mut row_solvable = false;
        for_each_tuple(p, small, |beta_row| {
            // α values range over outputs plus ε (encoded as `p`)
            for_each_tuple(small, p + 1, |alpha_row| {
                examined += 1;
                let ok = (0..p).all(|y| alpha_row[beta_row[y]] == y);
                if ok {
                    row_solvable = true;
                }
                !ok
            });
            !row_solvable
        });
        every_row_solvable &= row_solvable;
    }
    Ok(MinimalityReport {
        p,
        identity_holds,
        smaller_codec_exists: every_row_solvable,
        candidates_examined: examined,
    })
}

/// Calls `visit` on every tuple in `{0..radix}^len` in lexicographic order
/// while it returns `true`.
fn for_each_tuple(len: usize, radix: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    if radix == 0 && len > 0 {
        return;
    }
    let mut digits = vec![0usize; len];
    loop {
        if !visit(&digits) {
            return;
        }
        let mut k = len;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < radix {
                break;
            }
            digits[k] = 0;
        }
    }
}
