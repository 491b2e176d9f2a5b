//! Closed-form average-age and average-delay evaluators with analytic bounds.
//!
//! For a code with length variable `L` under the source pmf, the memoryless
//! update scheme attains average age `E[L] + E[L^2]/(2 E[L]) - 1/2`. The
//! randomized variant transmits symbol `x` with probability `theta(x)` and
//! otherwise sends a skip codeword; a binary erasure channel with per-bit
//! retransmission rescales the cost. The same lengths, used as M/G/1 service
//! times under Poisson arrivals, give the average sojourn time
//! `E[L^2]/(2 (1/lambda - E[L])) + E[L]` while the queue is stable.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{moments, shannon_lengths, CodecError, LengthAssignment};
use crate::pmf::Pmf;

/// Errors raised by the cost evaluators.
#[derive(Debug, Error)]
pub enum AgeError {
    #[error("theta at index {index} is {value}; transmit probabilities must lie in [0, 1]")]
    ThetaOutOfRange { index: usize, value: f64 },
    #[error("all transmit probabilities are zero; nothing is ever sent")]
    AllThetaZero,
    #[error("skip codeword length {0} must be finite and nonnegative")]
    InvalidSkipLength(f64),
    #[error("alphabet sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("mean codeword length is zero; the age formula is undefined")]
    ZeroMeanLength,
    #[error("erasure probability {0} must lie in [0, 1)")]
    EpsilonOutOfRange(f64),
    #[error("arrival rate {0} must be positive and finite")]
    InvalidRate(f64),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Per-symbol transmit probabilities plus the skip-codeword length.
///
/// When the scheme decides not to transmit the freshest symbol, it sends a
/// dedicated skip codeword of `skip_length` bits so the receiver stays in
/// sync.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedScheme {
    theta: Vec<f64>,
    skip_length: f64,
}

impl RandomizedScheme {
    /// Validates transmit probabilities (each in `[0, 1]`, at least one
    /// positive) and the skip length (finite, nonnegative).
    pub fn new(theta: Vec<f64>, skip_length: f64) -> Result<Self, AgeError> {
        for (index, &value) in theta.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(AgeError::ThetaOutOfRange { index, value });
            }
        }
        if !theta.iter().any(|&t| t > 0.0) {
            return Err(AgeError::AllThetaZero);
        }
        if !skip_length.is_finite() || skip_length < 0.0 {
            return Err(AgeError::InvalidSkipLength(skip_length));
        }
        Ok(Self { theta, skip_length })
    }

    /// Scheme that always transmits (`theta = 1` everywhere).
    pub fn always_transmit(n: usize, skip_length: f64) -> Result<Self, AgeError> {
        Self::new(vec![1.0; n], skip_length)
    }

    /// Builds a scheme whose skip length defaults to the shortest codeword
    /// length in `l`.
    pub fn with_default_skip(theta: Vec<f64>, l: &LengthAssignment) -> Result<Self, AgeError> {
        let shortest = l
            .lengths()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        Self::new(theta, if shortest.is_finite() { shortest } else { 0.0 })
    }

    /// Transmit probability per symbol.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Skip codeword length in bits.
    pub fn skip_length(&self) -> f64 {
        self.skip_length
    }

    /// `E[theta(X)]` under `p`.
    pub fn mean_theta(&self, p: &Pmf) -> Result<f64, AgeError> {
        if p.len() != self.theta.len() {
            return Err(AgeError::SizeMismatch(p.len(), self.theta.len()));
        }
        Ok(p.probs()
            .iter()
            .zip(&self.theta)
            .map(|(&px, &tx)| px * tx)
            .sum())
    }
}

/// Summary of a code's age cost and the analytic bounds for its source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgeReport {
    pub mean_length: f64,
    pub second_moment: f64,
    pub average_age: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl AgeReport {
    /// Evaluates a code against the bounds of its source distribution.
    pub fn for_code(p: &Pmf, l: &LengthAssignment) -> Result<Self, AgeError> {
        let (mean_length, second_moment) = moments(p, l)?;
        let average_age = average_age(p, l)?;
        let (lower_bound, upper_bound) = age_bounds(p);
        Ok(Self {
            mean_length,
            second_moment,
            average_age,
            lower_bound,
            upper_bound,
        })
    }

    /// Serializes the report to JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializing floats cannot fail")
    }
}

/// Average age of the memoryless update scheme:
/// `E[L] + E[L^2]/(2 E[L]) - 1/2`.
pub fn average_age(p: &Pmf, l: &LengthAssignment) -> Result<f64, AgeError> {
    let (m1, m2) = moments(p, l)?;
    if m1 <= 0.0 {
        return Err(AgeError::ZeroMeanLength);
    }
    Ok(m1 + m2 / (2.0 * m1) - 0.5)
}

/// Average age of the randomized scheme:
/// `E[L(theta)]/E[theta(X)] + E[L(theta)^2]/(2 E[L(theta)]) - 1/2`,
/// where `L(theta)` equals `l(x)` with probability `P(x) theta(x)` and the
/// skip length with the remaining probability.
pub fn average_age_randomized(
    p: &Pmf,
    l: &LengthAssignment,
    scheme: &RandomizedScheme,
) -> Result<f64, AgeError> {
    if p.len() != l.len() {
        return Err(AgeError::SizeMismatch(p.len(), l.len()));
    }
    if p.len() != scheme.theta.len() {
        return Err(AgeError::SizeMismatch(p.len(), scheme.theta.len()));
    }
    // Accumulating the skip mass as sum p (1 - theta) makes theta = 1 reduce
    // to the deterministic formula exactly, with no float residue from the
    // skip term.
    let mut skip_mass = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for ((&px, &tx), &lx) in p.probs().iter().zip(&scheme.theta).zip(l.lengths()) {
        skip_mass += px * (1.0 - tx);
        m1 += px * tx * lx;
        m2 += px * tx * lx * lx;
    }
    let mean_theta = 1.0 - skip_mass;
    if mean_theta <= 0.0 {
        return Err(AgeError::AllThetaZero);
    }
    m1 += skip_mass * scheme.skip_length;
    m2 += skip_mass * scheme.skip_length * scheme.skip_length;
    if m1 <= 0.0 {
        return Err(AgeError::ZeroMeanLength);
    }
    Ok(m1 / mean_theta + m2 / (2.0 * m1) - 0.5)
}

/// Average age over a binary erasure channel with erasure probability `eps`
/// and per-bit retransmission: `(base_age + eps) / (1 - eps)`.
///
/// The identity is exact for every sampling scheme: each slot of a cycle
/// stretches into an independent geometric number of channel uses, which
/// scales both `E[Y]` and `E[Z]` by `1/(1-eps)` and adds `eps E[Y]/(1-eps)²`
/// of variance to the cycle length.
pub fn average_age_erasure(base_age: f64, eps: f64) -> Result<f64, AgeError> {
    if !eps.is_finite() || !(0.0..1.0).contains(&eps) {
        return Err(AgeError::EpsilonOutOfRange(eps));
    }
    Ok((base_age + eps) / (1.0 - eps))
}

/// Analytic bounds on the optimal average age:
/// `(1.5 H(P) - 0.5, 1.5 log2 |X| + 1)`.
pub fn age_bounds(p: &Pmf) -> (f64, f64) {
    let lower = 1.5 * p.entropy() - 0.5;
    let upper = 1.5 * (p.len() as f64).log2() + 1.0;
    (lower, upper)
}

/// Certificate that the integer Shannon code stays within the upper age
/// bound: returns the slack
/// `log2 |X| + 1 - (1 - 1/(2 ln 2)) E[L_S^2]/E[L_S]`, which is nonnegative
/// for every pmf.
pub fn shannon_age_certificate(p: &Pmf) -> f64 {
    let l = shannon_lengths(p, true);
    let (m1, m2) = moments(p, &l).expect("matching alphabet by construction");
    (p.len() as f64).log2() + 1.0 - (1.0 - 1.0 / (2.0 * LN_2)) * m2 / m1
}

/// Average M/G/1 sojourn time with arrival rate `lambda` per bit-slot:
/// `E[L^2]/(2 (1/lambda - E[L])) + E[L]`, or infinity when the queue is
/// unstable (`E[L] >= 1/lambda`).
pub fn average_delay(p: &Pmf, l: &LengthAssignment, lambda: f64) -> Result<f64, AgeError> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(AgeError::InvalidRate(lambda));
    }
    let (m1, m2) = moments(p, l)?;
    let l_th = 1.0 / lambda;
    if m1 >= l_th {
        return Ok(f64::INFINITY);
    }
    Ok(m2 / (2.0 * (l_th - m1)) + m1)
}
