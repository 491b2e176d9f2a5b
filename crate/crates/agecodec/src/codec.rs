//! Codeword length assignments and prefix-free code construction.
//!
//! Lengths live in the Kraft polytope `{ l >= 0 : sum_x 2^{-l(x)} <= 1 }`.
//! Real-valued assignments (e.g. `-log2 P(x)`) measure the attainable cost of
//! a distribution; integer assignments are realized as concrete codewords by
//! the canonical construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmf::Pmf;

/// Slack allowed on real-valued Kraft sums to absorb float error in `-log2`.
pub const KRAFT_TOL: f64 = 1e-9;

/// Longest representable codeword, in bits.
pub const MAX_CODEWORD_BITS: u64 = 60;

/// Errors raised by length validation and code construction.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("length at index {index} is {value}; lengths must be finite and nonnegative")]
    InvalidLength { index: usize, value: f64 },
    #[error("operation requires integer lengths")]
    NotIntegral,
    #[error("Kraft sum {0} exceeds 1; lengths admit no prefix-free code")]
    KraftExceeded(f64),
    #[error("zero-length codeword is impossible for an alphabet of 2 or more symbols")]
    ZeroLengthCodeword,
    #[error("codeword length {0} exceeds the supported maximum of {MAX_CODEWORD_BITS} bits")]
    LengthTooLarge(u64),
    #[error("alphabet sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
}

/// Real- or integer-valued codeword lengths, one per symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LengthAssignment {
    lengths: Vec<f64>,
    integral: bool,
}

impl LengthAssignment {
    /// Wraps real-valued lengths, validating finiteness and nonnegativity.
    /// The integrality flag is set automatically when every entry is a whole
    /// number.
    pub fn from_reals(lengths: Vec<f64>) -> Result<Self, CodecError> {
        for (index, &value) in lengths.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(CodecError::InvalidLength { index, value });
            }
        }
        let integral = lengths.iter().all(|l| l.fract() == 0.0);
        Ok(Self { lengths, integral })
    }

    /// Wraps integer lengths.
    pub fn from_integers(lengths: &[u64]) -> Self {
        Self {
            lengths: lengths.iter().map(|&l| l as f64).collect(),
            integral: true,
        }
    }

    /// Number of symbols.
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    /// True when the assignment is empty.
    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Length of symbol `x` in bits.
    pub fn get(&self, x: usize) -> f64 {
        self.lengths[x]
    }

    /// All lengths, indexed by symbol id.
    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// True when every entry is a nonnegative integer.
    pub fn is_integral(&self) -> bool {
        self.integral
    }

    /// The lengths as integers; errors unless the integrality flag is set.
    pub fn integer_lengths(&self) -> Result<Vec<u64>, CodecError> {
        if !self.integral {
            return Err(CodecError::NotIntegral);
        }
        Ok(self.lengths.iter().map(|&l| l as u64).collect())
    }

    /// The Kraft sum `sum_x 2^{-l(x)}`.
    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| (-l).exp2()).sum()
    }

    /// True when the Kraft sum is at most `1 + KRAFT_TOL`.
    pub fn is_kraft_feasible(&self) -> bool {
        self.kraft_sum() <= 1.0 + KRAFT_TOL
    }

    /// Largest length in bits.
    pub fn max_length(&self) -> f64 {
        self.lengths.iter().cloned().fold(0.0, f64::max)
    }

    /// Serializes to CSV with columns `symbol,length`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("symbol,length\n");
        for (x, l) in self.lengths.iter().enumerate() {
            out.push_str(&format!("{x},{l}\n"));
        }
        out
    }
}

impl TryFrom<Vec<f64>> for LengthAssignment {
    type Error = CodecError;

    fn try_from(lengths: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_reals(lengths)
    }
}

impl From<LengthAssignment> for Vec<f64> {
    fn from(assignment: LengthAssignment) -> Self {
        assignment.lengths
    }
}

/// Shannon lengths for `p`: `-log2 P(x)`, ceiled to integers when `integer`
/// is set.
///
/// Real mode satisfies Kraft with equality; integer mode keeps the exact sum
/// at most one because `2^{-ceil(-log2 P(x))} <= P(x)`.
pub fn shannon_lengths(p: &Pmf, integer: bool) -> LengthAssignment {
    if integer {
        let lengths: Vec<u64> = p.probs().iter().map(|&px| exact_shannon_bits(px)).collect();
        LengthAssignment::from_integers(&lengths)
    } else {
        let lengths: Vec<f64> = p.probs().iter().map(|&px| (-px.log2()).max(0.0)).collect();
        LengthAssignment::from_reals(lengths).expect("-log2 of positive probabilities is finite")
    }
}

/// Smallest integer `k` with `2^{-k} <= px`, computed so that float noise in
/// `log2` cannot shift the result across an integer boundary.
fn exact_shannon_bits(px: f64) -> u64 {
    let mut k = (-px.log2()).ceil().max(0.0) as i32;
    while 2f64.powi(-k) > px {
        k += 1;
    }
    while k > 0 && 2f64.powi(-(k - 1)) <= px {
        k -= 1;
    }
    k.max(0) as u64
}

/// Entrywise ceiling of a real length assignment. Integer inputs pass through
/// unchanged; Kraft feasibility is preserved because each term only shrinks.
pub fn round_up(l: &LengthAssignment) -> LengthAssignment {
    let lengths: Vec<u64> = l.lengths().iter().map(|&v| v.ceil() as u64).collect();
    LengthAssignment::from_integers(&lengths)
}

/// First and second moments `(E[L], E[L^2])` of the codeword length under `p`.
pub fn moments(p: &Pmf, l: &LengthAssignment) -> Result<(f64, f64), CodecError> {
    if p.len() != l.len() {
        return Err(CodecError::SizeMismatch(p.len(), l.len()));
    }
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (&px, &lx) in p.probs().iter().zip(l.lengths()) {
        m1 += px * lx;
        m2 += px * lx * lx;
    }
    debug_assert!(
        m2 >= m1 * m1 - 1e-9 * m2.max(1.0),
        "second moment below squared mean: E[L]={m1}, E[L^2]={m2}"
    );
    Ok((m1, m2))
}

/// A concrete binary prefix-free code, one codeword per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook {
    codewords: Vec<String>,
}

/// Builds the canonical prefix-free code for Kraft-feasible integer lengths.
///
/// Symbols are ordered by `(length, symbol id)` and receive lexicographically
/// increasing codewords, which makes the construction deterministic.
pub fn canonical_code(l: &LengthAssignment) -> Result<CodeBook, CodecError> {
    let lengths = l.integer_lengths()?;
    if lengths.is_empty() {
        return Ok(CodeBook { codewords: vec![] });
    }
    let max_len = *lengths.iter().max().expect("nonempty");
    if max_len > MAX_CODEWORD_BITS {
        return Err(CodecError::LengthTooLarge(max_len));
    }
    if lengths.contains(&0) {
        return Err(CodecError::ZeroLengthCodeword);
    }
    // Exact integer Kraft check: sum 2^{max-l} must not exceed 2^max.
    let scaled: u128 = lengths.iter().map(|&len| 1u128 << (max_len - len)).sum();
    if scaled > 1u128 << max_len {
        return Err(CodecError::KraftExceeded(l.kraft_sum()));
    }

    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&x| (lengths[x], x));
    let mut codewords = vec![String::new(); lengths.len()];
    let mut code: u64 = 0;
    let mut prev_len = lengths[order[0]];
    for &x in &order {
        code <<= lengths[x] - prev_len;
        prev_len = lengths[x];
        codewords[x] = format!("{code:0width$b}", width = lengths[x] as usize);
        code += 1;
    }
    Ok(CodeBook { codewords })
}

impl CodeBook {
    /// Codeword of symbol `x`.
    pub fn word(&self, x: usize) -> &str {
        &self.codewords[x]
    }

    /// All codewords, indexed by symbol id.
    pub fn codewords(&self) -> &[String] {
        &self.codewords
    }

    /// Number of codewords.
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    /// True when the book is empty.
    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Codeword lengths in bits.
    pub fn lengths(&self) -> Vec<u64> {
        self.codewords.iter().map(|w| w.len() as u64).collect()
    }

    /// The lengths as a [`LengthAssignment`].
    pub fn length_assignment(&self) -> LengthAssignment {
        LengthAssignment::from_integers(&self.lengths())
    }

    /// Longest codeword length in bits.
    pub fn max_length(&self) -> u64 {
        self.codewords.iter().map(|w| w.len() as u64).max().unwrap_or(0)
    }

    /// True when no codeword is a prefix of another.
    pub fn is_prefix_free(&self) -> bool {
        let mut sorted = self.codewords.clone();
        sorted.sort();
        sorted
            .windows(2)
            .all(|pair| !pair[1].starts_with(pair[0].as_str()))
    }

    /// Serializes to a JSON object mapping symbol id to bit string.
    pub fn to_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .codewords
            .iter()
            .enumerate()
            .map(|(x, w)| (x.to_string(), serde_json::Value::String(w.clone())))
            .collect();
        serde_json::to_string_pretty(&serde_json::Value::Object(map))
            .expect("serializing a string map cannot fail")
    }
}
