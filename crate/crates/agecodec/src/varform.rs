//! Variational representation of p-norms and the tilted-weight objectives.
//!
//! For `p > 1` and a nonnegative random variable `V` under pmf `P`,
//! `||V||_p = max_{Q << P} E[(dQ/dP)^{1/p'} V]` with `p'` the Hölder
//! conjugate, the maximum being attained at `Q*(x) ∝ P(x) V(x)^p`. Applied
//! with `p = 2` to codeword lengths, the formula linearizes the age and delay
//! costs into per-symbol weights
//! `g(x) = (1 ∓ z^2/2) P(x) + z sqrt(Q(x) P(x))`
//! (minus for age, plus for delay). Maximizing the resulting concave
//! objectives over `(z, Q)` yields the tilted distribution whose Shannon
//! lengths are cost-optimal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmf::{Pmf, PmfError};

/// Slack allowed below zero when testing `g >= 0` feasibility.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Relative floor assigned to zero-mass coordinates of `q_star` so the result
/// remains a valid pmf; far below every tolerance used by callers.
const Q_STAR_FLOOR: f64 = 1e-280;

/// Errors raised by the variational operations.
#[derive(Debug, Error)]
pub enum VarformError {
    #[error("alphabet sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("tilt parameter z = {0} must be finite and nonnegative")]
    InvalidZ(f64),
    #[error("point is infeasible: min g = {min_g} < 0")]
    Infeasible { min_g: f64 },
    #[error("norm order p = {0} must be finite and > 1")]
    POutOfRange(f64),
    #[error("values are all zero; the maximizing tilt is undefined")]
    AllZeroValues,
    #[error("stability threshold {0} must be finite and positive")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Pmf(#[from] PmfError),
}

/// Cost family selector: minimum average age or minimum average delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Age,
    Delay,
}

/// Per-symbol tilt weight `g(x)` for one symbol.
pub(crate) fn g_value(px: f64, qx: f64, z: f64, mode: Mode) -> f64 {
    let quad = match mode {
        Mode::Age => 1.0 - z * z / 2.0,
        Mode::Delay => 1.0 + z * z / 2.0,
    };
    quad * px + z * (qx * px).sqrt()
}

/// Shared entropy-like sum `sum_x g(x) log2(G / g(x))` with `G = sum g`,
/// treating `0 log(G/0)` as `0`. Entries within [`FEASIBILITY_SLACK`] below
/// zero are clamped to zero; the caller has already rejected anything lower.
pub(crate) fn weighted_log_sum(g: &[f64]) -> f64 {
    let total: f64 = g.iter().map(|&v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    g.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * (total / v).log2())
        .sum()
}

/// The tilt weights `g_{z,Q,P}` of one `(z, Q)` point.
#[derive(Debug, Clone)]
pub struct GWeights {
    z: f64,
    mode: Mode,
    values: Vec<f64>,
}

impl GWeights {
    /// Computes `g(x) = (1 ∓ z^2/2) P(x) + z sqrt(Q(x) P(x))` per symbol.
    pub fn new(p: &Pmf, z: f64, q: &Pmf, mode: Mode) -> Result<Self, VarformError> {
        if !z.is_finite() || z < 0.0 {
            return Err(VarformError::InvalidZ(z));
        }
        if p.len() != q.len() {
            return Err(VarformError::SizeMismatch(p.len(), q.len()));
        }
        let values = p
            .probs()
            .iter()
            .zip(q.probs())
            .map(|(&px, &qx)| g_value(px, qx, z, mode))
            .collect();
        Ok(Self { z, mode, values })
    }

    /// The tilt parameter `z`.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// The cost family this weight vector belongs to.
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Per-symbol weights `g(x)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sum `G = sum_x g(x)`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Smallest weight.
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// True when every `g(x) >= -FEASIBILITY_SLACK`. Delay-mode weights are
    /// nonnegative for every `z >= 0`; age-mode weights can go negative once
    /// `z` exceeds `sqrt(2)`.
    pub fn is_feasible(&self) -> bool {
        self.min() >= -FEASIBILITY_SLACK
    }

    /// The weights normalized into a distribution `g/G`, clamping the
    /// feasibility slack to zero.
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().map(|&v| v.max(0.0)).sum();
        self.values.iter().map(|&v| v.max(0.0) / total).collect()
    }
}

/// Evaluates `E[(dQ/dP)^{1/p'} V]` for `p > 1`; never exceeds `||V||_p`.
pub fn pnorm_variational_value(
    p: &Pmf,
    values: &[f64],
    q: &Pmf,
    p_exp: f64,
) -> Result<f64, VarformError> {
    if !p_exp.is_finite() || p_exp <= 1.0 {
        return Err(VarformError::POutOfRange(p_exp));
    }
    if p.len() != values.len() {
        return Err(VarformError::SizeMismatch(p.len(), values.len()));
    }
    if p.len() != q.len() {
        return Err(VarformError::SizeMismatch(p.len(), q.len()));
    }
    let conjugate_exponent = (p_exp - 1.0) / p_exp; // 1/p'
    Ok(p
        .probs()
        .iter()
        .zip(q.probs())
        .zip(values)
        .map(|((&px, &qx), &vx)| px * (qx / px).powf(conjugate_exponent) * vx.abs())
        .sum())
}

/// The p-norm `||V||_p = (E[|V|^p])^{1/p}` under `p`.
pub fn pnorm(p: &Pmf, values: &[f64], p_exp: f64) -> Result<f64, VarformError> {
    if !p_exp.is_finite() || p_exp <= 1.0 {
        return Err(VarformError::POutOfRange(p_exp));
    }
    if p.len() != values.len() {
        return Err(VarformError::SizeMismatch(p.len(), values.len()));
    }
    Ok(p
        .probs()
        .iter()
        .zip(values)
        .map(|(&px, &vx)| px * vx.abs().powf(p_exp))
        .sum::<f64>()
        .powf(1.0 / p_exp))
}

/// The maximizer of the variational formula:
/// `Q*(x) = P(x) |V(x)|^p / sum_y P(y) |V(y)|^p`.
///
/// Symbols with `V(x) = 0` receive a vanishing relative floor instead of
/// exact zero mass so the result remains a valid [`Pmf`] over the full
/// alphabet; the perturbation is orders of magnitude below every tolerance
/// used by callers.
pub fn q_star(p: &Pmf, values: &[f64], p_exp: f64) -> Result<Pmf, VarformError> {
    if !p_exp.is_finite() || p_exp <= 1.0 {
        return Err(VarformError::POutOfRange(p_exp));
    }
    if p.len() != values.len() {
        return Err(VarformError::SizeMismatch(p.len(), values.len()));
    }
    let mut weights: Vec<f64> = p
        .probs()
        .iter()
        .zip(values)
        .map(|(&px, &vx)| px * vx.abs().powf(p_exp))
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(VarformError::AllZeroValues);
    }
    let floor = total * Q_STAR_FLOOR;
    for w in &mut weights {
        if *w < floor {
            *w = floor;
        }
    }
    Ok(Pmf::new(&weights)?)
}

/// The age objective `c_P(z, Q) = sum_x g(x) log2(G / g(x))`.
///
/// Errors when some `g(x)` falls below `-FEASIBILITY_SLACK`, i.e. the point
/// lies outside the feasible set.
pub fn age_objective(p: &Pmf, z: f64, q: &Pmf) -> Result<f64, VarformError> {
    let g = GWeights::new(p, z, q, Mode::Age)?;
    if !g.is_feasible() {
        return Err(VarformError::Infeasible { min_g: g.min() });
    }
    Ok(weighted_log_sum(g.values()))
}

/// The delay objective
/// `sum_x g(x) log2(G / g(x)) - (z^2/2) L_th` with delay-mode weights.
pub fn delay_objective(p: &Pmf, z: f64, q: &Pmf, l_th: f64) -> Result<f64, VarformError> {
    if !l_th.is_finite() || l_th <= 0.0 {
        return Err(VarformError::InvalidThreshold(l_th));
    }
    let g = GWeights::new(p, z, q, Mode::Delay)?;
    Ok(weighted_log_sum(g.values()) - z * z / 2.0 * l_th)
}
