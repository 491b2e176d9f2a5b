//! Validated probability mass functions over finite indexed alphabets.
//!
//! A [`Pmf`] owns strictly positive probabilities that sum to one over symbol
//! ids `0..N-1`. Construction normalizes raw weights, drops zero-mass symbols
//! (recording the surviving original indices), and rejects degenerate inputs.
//! A [`Partition`] groups symbols of equal probability so that optimizers can
//! work on one coordinate per group instead of one per symbol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used to verify normalization after construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Default tolerance for grouping equal probabilities.
pub const GROUPING_TOL: f64 = 1e-12;

/// Errors raised by pmf construction and information measures.
#[derive(Debug, Error)]
pub enum PmfError {
    #[error("all weights are zero")]
    AllZero,
    #[error("need at least 2 positive-mass symbols, got {0}")]
    TooFewSymbols(usize),
    #[error("weight at index {index} is {value}; weights must be finite and nonnegative")]
    InvalidWeight { index: usize, value: f64 },
    #[error("alphabet sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("Zipf alphabet must have N >= 2, got {0}")]
    ZipfAlphabetTooSmall(usize),
    #[error("Zipf exponent must be finite and nonnegative, got {0}")]
    ZipfInvalidExponent(f64),
    #[error("malformed probability file: {0}")]
    Parse(String),
}

/// A finite probability mass function with strictly positive entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    probs: Vec<f64>,
    original_indices: Vec<usize>,
    dropped_zero_mass: bool,
}

impl Pmf {
    /// Builds a pmf from nonnegative weights, normalizing to sum one.
    ///
    /// Zero-weight symbols are dropped; the surviving symbols are re-indexed
    /// consecutively and their original indices retained (see
    /// [`original_indices`](Self::original_indices)). At least two symbols
    /// must carry positive mass.
    pub fn new(weights: &[f64]) -> Result<Self, PmfError> {
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(PmfError::InvalidWeight { index, value });
            }
        }
        let mut probs = Vec::with_capacity(weights.len());
        let mut original_indices = Vec::with_capacity(weights.len());
        for (index, &value) in weights.iter().enumerate() {
            if value > 0.0 {
                probs.push(value);
                original_indices.push(index);
            }
        }
        if probs.is_empty() {
            return Err(PmfError::AllZero);
        }
        if probs.len() < 2 {
            return Err(PmfError::TooFewSymbols(probs.len()));
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let dropped_zero_mass = probs.len() != weights.len();
        Ok(Self {
            probs,
            original_indices,
            dropped_zero_mass,
        })
    }

    /// Uniform distribution over `n` symbols.
    pub fn uniform(n: usize) -> Result<Self, PmfError> {
        Self::new(&vec![1.0; n])
    }

    /// The Zipf(s, N) distribution: `P(i) = i^{-s} / sum_j j^{-s}` over
    /// symbols `1..=N` (stored at ids `0..N-1`). `s = 0` gives the uniform
    /// distribution.
    pub fn zipf(s: f64, n: usize) -> Result<Self, PmfError> {
        if n < 2 {
            return Err(PmfError::ZipfAlphabetTooSmall(n));
        }
        if !s.is_finite() || s < 0.0 {
            return Err(PmfError::ZipfInvalidExponent(s));
        }
        let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-s)).collect();
        Self::new(&weights)
    }

    /// Number of symbols.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// Always false: construction guarantees at least two symbols.
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of symbol `x`.
    pub fn prob(&self, x: usize) -> f64 {
        self.probs[x]
    }

    /// All probabilities, indexed by symbol id.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Smallest probability in the support.
    pub fn min_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest probability in the support.
    pub fn max_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(0.0, f64::max)
    }

    /// Original input index of each surviving symbol.
    pub fn original_indices(&self) -> &[usize] {
        &self.original_indices
    }

    /// True when zero-mass symbols were dropped during construction.
    pub fn dropped_zero_mass(&self) -> bool {
        self.dropped_zero_mass
    }

    /// Shannon entropy in bits: `-sum P(x) log2 P(x)`.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| p * p.log2()).sum::<f64>()
    }

    /// Kullback-Leibler divergence `D(P || Q)` in bits.
    ///
    /// Both pmfs must cover the same alphabet size; every entry of either pmf
    /// is strictly positive by construction, so absolute continuity holds
    /// whenever the sizes match.
    pub fn kl_divergence(&self, q: &Pmf) -> Result<f64, PmfError> {
        if self.len() != q.len() {
            return Err(PmfError::SizeMismatch(self.len(), q.len()));
        }
        let kl = self
            .probs
            .iter()
            .zip(q.probs.iter())
            .map(|(&p, &q)| p * (p / q).log2())
            .sum::<f64>();
        Ok(kl.max(0.0))
    }

    /// Partitions the alphabet into groups of (near-)equal probability.
    ///
    /// Probabilities are sorted and adjacent values within `tol` of each
    /// other share a group. `tol = 0` groups exactly equal entries.
    ///
    /// # Panics
    /// Panics if `tol` is negative or non-finite.
    pub fn group_equal_probs(&self, tol: f64) -> Partition {
        assert!(tol >= 0.0 && tol.is_finite(), "tolerance must be >= 0");
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.probs[a]
                .partial_cmp(&self.probs[b])
                .expect("probabilities are finite")
                .then(a.cmp(&b))
        });
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        for &x in &order {
            let p = self.probs[x];
            if groups.is_empty() || p - prev > tol {
                groups.push(vec![x]);
            } else {
                groups.last_mut().expect("nonempty").push(x);
            }
            prev = p;
        }
        // Highest-probability group first, ascending symbol ids inside.
        groups.reverse();
        for g in &mut groups {
            g.sort_unstable();
        }
        Partition::from_groups(self, groups)
    }

    /// Serializes to a JSON array of probabilities.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializing a float vector cannot fail")
    }

    /// Parses a JSON array of probabilities, re-validating all invariants.
    pub fn from_json(text: &str) -> Result<Self, PmfError> {
        let weights: Vec<f64> =
            serde_json::from_str(text).map_err(|e| PmfError::Parse(e.to_string()))?;
        Self::new(&weights)
    }

    /// Serializes to CSV: a `p` header followed by one probability per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p\n");
        for p in &self.probs {
            out.push_str(&format!("{p}\n"));
        }
        out
    }

    /// Parses the one-column CSV format produced by [`to_csv`](Self::to_csv),
    /// re-validating all invariants.
    pub fn from_csv(text: &str) -> Result<Self, PmfError> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("p") => {}
            other => {
                return Err(PmfError::Parse(format!(
                    "expected header 'p', got {other:?}"
                )))
            }
        }
        let mut weights = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let value: f64 = line
                .parse()
                .map_err(|e| PmfError::Parse(format!("bad probability {line:?}: {e}")))?;
            weights.push(value);
        }
        Self::new(&weights)
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = PmfError;

    fn try_from(weights: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(&weights)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(pmf: Pmf) -> Self {
        pmf.probs
    }
}

/// Disjoint, exhaustive groups of equal-probability symbols.
#[derive(Debug, Clone)]
pub struct Partition {
    groups: Vec<Vec<usize>>,
    /// Common per-symbol probability of each group (mean over the group).
    probs: Vec<f64>,
    /// Total probability mass of each group.
    masses: Vec<f64>,
    /// Group index of each symbol.
    group_of: Vec<usize>,
}

impl Partition {
    fn from_groups(pmf: &Pmf, groups: Vec<Vec<usize>>) -> Self {
        let mut probs = Vec::with_capacity(groups.len());
        let mut masses = Vec::with_capacity(groups.len());
        let mut group_of = vec![0usize; pmf.len()];
        for (gi, group) in groups.iter().enumerate() {
            let mass: f64 = group.iter().map(|&x| pmf.prob(x)).sum();
            masses.push(mass);
            probs.push(mass / group.len() as f64);
            for &x in group {
                group_of[x] = gi;
            }
        }
        Self {
            groups,
            probs,
            masses,
            group_of,
        }
    }

    /// Number of groups.
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Symbol ids of group `i`, ascending.
    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    /// All groups, highest common probability first.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Number of symbols in group `i`.
    pub fn group_size(&self, i: usize) -> usize {
        self.groups[i].len()
    }

    /// Common per-symbol probability of group `i`.
    pub fn group_prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Total probability mass of group `i`.
    pub fn group_mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    /// Group index containing symbol `x`.
    pub fn group_of(&self, x: usize) -> usize {
        self.group_of[x]
    }

    /// Total number of symbols covered.
    pub fn num_symbols(&self) -> usize {
        self.group_of.len()
    }

    /// Expands one value per group into one value per symbol.
    pub fn expand(&self, per_group: &[f64]) -> Vec<f64> {
        assert_eq!(per_group.len(), self.num_groups(), "group count mismatch");
        let mut out = vec![0.0; self.group_of.len()];
        for (x, &g) in self.group_of.iter().enumerate() {
            out[x] = per_group[g];
        }
        out
    }
}
