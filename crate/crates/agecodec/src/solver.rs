//! Maxmin solvers for age- and delay-optimal prefix-free codes.
//!
//! Both costs admit the same saddle structure: maximize the tilted-weight
//! objective over the tilt `(z, Q)` and read the optimal code off the
//! maximizer as `P*(x) = g(x) / Σ g` with real lengths `-log2 P*(x)`. The
//! outer maximization runs a 1-D grid-plus-golden-section search over `z`
//! with a concave exponentiated-gradient ascent over `Q` on the reduced
//! simplex (one coordinate per equal-probability group), an alternation
//! fallback driven by the closed-form updates `z ← √(E[L²])/E[L]` and
//! `Q ← q_star(P, ℓ, 2)`, and deterministic multistarts. Candidates are
//! polished to a fixed point of the alternation map and the best primal cost
//! wins. [`direct_oracle`] minimizes the primal cost directly and serves as
//! an independent cross-check; [`saddle_check`] verifies the saddle-point
//! conditions on a finished result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::codec::{
    canonical_code, moments, round_up, shannon_lengths, CodeBook, CodecError, LengthAssignment,
};
use crate::pmf::{Partition, Pmf, PmfError, GROUPING_TOL};
use crate::varform::{self, Mode, VarformError, FEASIBILITY_SLACK};

/// A result is converged when the primal cost and the maxmin objective agree
/// this tightly.
pub const DUALITY_TOL: f64 = 1e-6;

/// Width at which the golden-section refinement of `z` stops.
const Z_REFINE_TOL: f64 = 1e-8;

/// Costs closer than this are treated as ties.
const TIE_TOL: f64 = 1e-12;

/// Relative floor used when a candidate's weights graze zero.
const WEIGHT_FLOOR: f64 = 1e-280;

/// Errors raised by the solvers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("arrival rate {0} must be finite and positive")]
    InvalidRate(f64),
    #[error(
        "no prefix-free code stabilizes the queue: H(P) = {entropy:.6} bits is not below the \
         mean-length budget 1/λ = {l_th:.6}"
    )]
    Unstable { entropy: f64, l_th: f64 },
    #[error("delay mode requires an arrival rate")]
    MissingRate,
    #[error("result carries no mean-length budget; it was not produced in delay mode")]
    MissingThreshold,
    #[error("invalid solver options: {0}")]
    BadOptions(String),
    #[error(transparent)]
    Varform(#[from] VarformError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Pmf(#[from] PmfError),
}

/// Knobs for the outer search and the inner ascent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Grid points for the initial sweep over `z`.
    pub z_grid_points: usize,
    /// Iteration cap for one inner ascent.
    pub inner_max_iters: u64,
    /// Relative objective-change threshold that stalls the inner ascent.
    pub inner_tol: f64,
    /// Number of random restarts of the inner ascent and the oracle.
    pub multistarts: usize,
    /// Seed for the deterministic multistart draws.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            z_grid_points: 64,
            inner_max_iters: 10_000,
            inner_tol: 1e-10,
            multistarts: 8,
            seed: 0,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), SolverError> {
        if self.z_grid_points < 2 {
            return Err(SolverError::BadOptions(format!(
                "z_grid_points = {} must be at least 2",
                self.z_grid_points
            )));
        }
        if self.inner_max_iters == 0 {
            return Err(SolverError::BadOptions(
                "inner_max_iters must be positive".into(),
            ));
        }
        if !(self.inner_tol > 0.0 && self.inner_tol <= 1e-3) {
            return Err(SolverError::BadOptions(format!(
                "inner_tol = {} must lie in (0, 1e-3]",
                self.inner_tol
            )));
        }
        if self.multistarts == 0 {
            return Err(SolverError::BadOptions(
                "multistarts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Solution of one maxmin problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptResult {
    /// Optimal tilt magnitude.
    pub z_star: f64,
    /// Optimal tilt direction; exactly constant on equal-probability groups.
    pub q_star: Pmf,
    /// Tilted distribution `g / Σ g` whose Shannon lengths are optimal.
    pub p_star: Pmf,
    /// Optimal real-valued lengths `-log2 p_star(x)`.
    pub lengths: LengthAssignment,
    /// Primal cost of `lengths` (age cost in bits, or mean delay).
    pub cost: f64,
    /// Total inner-ascent and refinement iterations spent.
    pub iterations: u64,
    /// True when `duality_gap <= DUALITY_TOL`.
    pub converged: bool,
    /// Absolute gap between the primal cost and the best objective value.
    pub duality_gap: f64,
    /// Which cost was optimized.
    pub mode: Mode,
    /// Mean-length budget `1/λ` in delay mode.
    pub l_th: Option<f64>,
    /// Primal cost after each improving alternation step; non-increasing.
    pub alternation_path: Vec<f64>,
    /// Diagnostic remarks (fallbacks, clamps, budget exhaustion).
    pub notes: Vec<String>,
}

impl OptResult {
    /// The quantity the cost measures once the slotted-sampling offset is
    /// removed: average age (`cost - 1/2`) in age mode, mean delay otherwise.
    pub fn average_age_or_delay(&self) -> f64 {
        match self.mode {
            Mode::Age => self.cost - 0.5,
            Mode::Delay => self.cost,
        }
    }

    /// Age-mode convenience for [`Self::average_age_or_delay`].
    pub fn average_age(&self) -> f64 {
        debug_assert_eq!(self.mode, Mode::Age);
        self.cost - 0.5
    }

    /// Rounds the real lengths up, builds the canonical code, and reports the
    /// rounded cost next to the real one; rounding keeps Kraft feasibility.
    pub fn integer_design(&self, p: &Pmf) -> Result<IntegerDesign, SolverError> {
        let lengths = round_up(&self.lengths);
        let book = canonical_code(&lengths)?;
        let cost = primal_cost(p, &lengths, self.mode, self.l_th.unwrap_or(0.0))?;
        Ok(IntegerDesign {
            lengths,
            book,
            cost,
        })
    }

    /// JSON rendering with the headline numbers at the top level.
    pub fn to_json(&self) -> String {
        let value = json!({
            "z_star": self.z_star,
            "q_star": self.q_star.probs(),
            "p_star": self.p_star.probs(),
            "lengths": self.lengths.lengths(),
            "cost": self.cost,
            "average_age_or_delay": self.average_age_or_delay(),
            "converged": self.converged,
            "duality_gap": self.duality_gap,
            "diagnostics": {
                "mode": self.mode,
                "l_th": self.l_th,
                "iterations": self.iterations,
                "alternation_path": self.alternation_path,
                "notes": self.notes,
            },
        });
        serde_json::to_string_pretty(&value).expect("result serializes")
    }
}

/// Integer code derived from a solved result by rounding up.
#[derive(Debug, Clone)]
pub struct IntegerDesign {
    pub lengths: LengthAssignment,
    pub book: CodeBook,
    pub cost: f64,
}

/// Saddle-point diagnostics for a finished result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleReport {
    /// Max normalized deviation of the lengths from the Shannon lengths of
    /// the normalized weights; zero when `ℓ*` minimizes `Σ g ℓ`.
    pub shannon_gap: f64,
    /// Normalized first-order stationarity of the objective in `z`.
    pub z_stationarity: f64,
    /// Relative spread of the simplex gradient over `Q`.
    pub q_stationarity: f64,
    /// Smallest tilt weight; the saddle requires it nonnegative.
    pub min_weight: f64,
    pub passed: bool,
    pub messages: Vec<String>,
}

/// Upper limit of the `z` search range.
///
/// `K = (log2 |X| / H(P)) * sqrt(1 / min_x P(x))`; always at least 1.
pub fn z_bound(p: &Pmf) -> f64 {
    ((p.len() as f64).log2() / p.entropy()) * p.min_prob().recip().sqrt()
}

/// Slack bound `log2(1 + 1/sqrt(2))`, the delay guarantee margin.
pub fn guarantee_margin() -> f64 {
    (1.0 + std::f64::consts::FRAC_1_SQRT_2).log2()
}

fn primal_cost(p: &Pmf, l: &LengthAssignment, mode: Mode, l_th: f64) -> Result<f64, SolverError> {
    let (m1, m2) = moments(p, l)?;
    Ok(match mode {
        Mode::Age => m1 + m2 / (2.0 * m1),
        Mode::Delay => {
            if m1 >= l_th {
                f64::INFINITY
            } else {
                m2 / (2.0 * (l_th - m1)) + m1
            }
        }
    })
}

/// Largest `z` keeping every age-mode weight nonnegative at this `(P, Q)`.
fn age_z_limit(p: &Pmf, q: &Pmf) -> f64 {
    p.probs()
        .iter()
        .zip(q.probs())
        .map(|(&px, &qx)| {
            let s = (qx / px).sqrt();
            s + (s * s + 2.0).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// The inner problem over group masses for one fixed `z`.
struct ReducedProblem<'a> {
    part: &'a Partition,
    mode: Mode,
    l_th: f64,
}

impl ReducedProblem<'_> {
    fn quad(&self, z: f64) -> f64 {
        match self.mode {
            Mode::Age => 1.0 - z * z / 2.0,
            Mode::Delay => 1.0 + z * z / 2.0,
        }
    }

    /// Per-symbol weight of each group under group masses `masses`.
    fn weights(&self, z: f64, masses: &[f64]) -> Vec<f64> {
        let quad = self.quad(z);
        (0..self.part.num_groups())
            .map(|i| {
                let px = self.part.group_prob(i);
                let qx = masses[i] / self.part.group_size(i) as f64;
                quad * px + z * (qx * px).sqrt()
            })
            .collect()
    }

    /// Objective value; negative infinity outside the feasible set.
    fn value(&self, z: f64, masses: &[f64]) -> f64 {
        let weights = self.weights(z, masses);
        let mut total = 0.0;
        for (i, &g) in weights.iter().enumerate() {
            if g < -FEASIBILITY_SLACK {
                return f64::NEG_INFINITY;
            }
            total += self.part.group_size(i) as f64 * g.max(0.0);
        }
        let penalty = match self.mode {
            Mode::Age => 0.0,
            Mode::Delay => z * z / 2.0 * self.l_th,
        };
        if total <= 0.0 {
            return -penalty;
        }
        let mut c = 0.0;
        for (i, &g) in weights.iter().enumerate() {
            if g > 0.0 {
                c += self.part.group_size(i) as f64 * g * (total / g).log2();
            }
        }
        c - penalty
    }

    /// Concave ascent over the mass simplex by exponentiated-gradient steps
    /// with backtracking; `masses` is updated in place.
    fn maximize(
        &self,
        z: f64,
        masses: &mut [f64],
        opts: &SolverOptions,
        iterations: &mut u64,
    ) -> f64 {
        let m = self.part.num_groups();
        if m == 1 {
            masses[0] = 1.0;
            return self.value(z, masses);
        }
        let mut value = self.value(z, masses);
        if !value.is_finite() {
            for (i, slot) in masses.iter_mut().enumerate() {
                *slot = self.part.group_mass(i);
            }
            value = self.value(z, masses);
        }
        if z == 0.0 {
            return value;
        }
        let mut eta = 0.5;
        let mut stall = 0u32;
        let mut trial = vec![0.0; m];
        for _ in 0..opts.inner_max_iters {
            *iterations += 1;
            let weights = self.weights(z, masses);
            let total: f64 = weights
                .iter()
                .enumerate()
                .map(|(i, &g)| self.part.group_size(i) as f64 * g.max(0.0))
                .sum();
            if total <= 0.0 {
                break;
            }
            let grads: Vec<f64> = (0..m)
                .map(|i| {
                    let px = self.part.group_prob(i);
                    let qx = masses[i] / self.part.group_size(i) as f64;
                    let g = weights[i].max(1e-300);
                    (z / 2.0) * (px / qx).sqrt() * (total / g).log2()
                })
                .collect();
            let mean: f64 = masses.iter().zip(&grads).map(|(&mi, &gi)| mi * gi).sum();
            let mut improved = false;
            while eta >= 1e-16 {
                let mut sum = 0.0;
                for i in 0..m {
                    trial[i] = masses[i] * (eta * (grads[i] - mean)).clamp(-30.0, 30.0).exp();
                    sum += trial[i];
                }
                for t in trial.iter_mut() {
                    *t /= sum;
                }
                let trial_value = self.value(z, &trial);
                if trial_value > value {
                    let gain = trial_value - value;
                    masses.copy_from_slice(&trial);
                    value = trial_value;
                    improved = true;
                    if gain <= opts.inner_tol * (1.0 + value.abs()) {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    eta = (eta * 1.5).min(64.0);
                    break;
                }
                eta *= 0.5;
            }
            if !improved || stall >= 3 {
                break;
            }
        }
        value
    }
}

/// A solution candidate anchored at one `(z, Q)` point.
struct Scored {
    z: f64,
    q: Pmf,
    p_star: Pmf,
    lengths: LengthAssignment,
    primal: f64,
    dual: f64,
    /// Relative spread of the simplex gradient; zero when `(z, Q)` is
    /// exactly stationary at `lengths`.
    spread: f64,
}

/// Relative spread of the per-symbol simplex gradient
/// `(z/2) sqrt(P/Q) ℓ` over the alphabet.
fn gradient_spread(p: &Pmf, q: &Pmf, lengths: &LengthAssignment, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (x, (&px, &qx)) in p.probs().iter().zip(q.probs()).enumerate() {
        let t = (z / 2.0) * (px / qx).sqrt() * lengths.get(x);
        lo = lo.min(t);
        hi = hi.max(t);
    }
    (hi - lo) / (hi.abs() + 1e-300)
}

fn masses_of(part: &Partition, q: &Pmf) -> Vec<f64> {
    (0..part.num_groups())
        .map(|i| part.group(i).iter().map(|&x| q.prob(x)).sum())
        .collect()
}

fn evaluate_candidate(
    p: &Pmf,
    problem: &ReducedProblem<'_>,
    z: f64,
    q: Pmf,
) -> Option<Scored> {
    let quad = problem.quad(z);
    let mut weights: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&px, &qx)| quad * px + z * (qx * px).sqrt())
        .collect();
    let max_w = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max_w.is_nan() || max_w <= 0.0 {
        return None;
    }
    let floor = max_w * WEIGHT_FLOOR;
    for w in weights.iter_mut() {
        if *w < floor {
            *w = floor;
        }
    }
    let p_star = Pmf::new(&weights).ok()?;
    let lengths =
        LengthAssignment::from_reals(p_star.probs().iter().map(|&px| -px.log2()).collect())
            .ok()?;
    let primal = primal_cost(p, &lengths, problem.mode, problem.l_th).ok()?;
    let dual = problem.value(z, &masses_of(problem.part, &q));
    let spread = gradient_spread(p, &q, &lengths, z);
    Some(Scored {
        z,
        q,
        p_star,
        lengths,
        primal,
        dual,
        spread,
    })
}

/// True when `a` beats `b`: better primal cost, then smaller point-wise
/// duality gap, then tighter stationarity, then smaller `z`.
fn beats(a: &Scored, b: &Scored) -> bool {
    if a.primal < b.primal - TIE_TOL {
        return true;
    }
    if a.primal > b.primal + TIE_TOL {
        return false;
    }
    let gap_a = (a.primal - a.dual).abs();
    let gap_b = (b.primal - b.dual).abs();
    if gap_a < gap_b - TIE_TOL {
        return true;
    }
    if gap_a > gap_b + TIE_TOL {
        return false;
    }
    if a.spread < b.spread - TIE_TOL {
        return true;
    }
    if a.spread > b.spread + TIE_TOL {
        return false;
    }
    a.z < b.z
}

/// Closed-form `(z, Q)` induced by a length assignment: `Q = q_star(P, ℓ, 2)`
/// and the stationary `z` of the dual objective, clamped to the feasible
/// range in age mode.
fn closed_form_point(
    p: &Pmf,
    lengths: &LengthAssignment,
    mode: Mode,
    l_th: f64,
) -> Option<(f64, Pmf)> {
    let (m1, m2) = moments(p, lengths).ok()?;
    let q = varform::q_star(p, lengths.lengths(), 2.0).ok()?;
    let z = match mode {
        Mode::Age => (m2.sqrt() / m1).min(age_z_limit(p, &q) * (1.0 - 1e-9)),
        Mode::Delay => {
            if m1 >= l_th {
                return None;
            }
            m2.sqrt() / (l_th - m1)
        }
    };
    Some((z, q))
}

/// Alternation from the Shannon lengths of `P`: each step maps the current
/// lengths to their closed-form `(z, Q)` and back to the Shannon lengths of
/// the normalized weights. Steps are kept only while the primal cost strictly
/// improves, so the recorded path is non-increasing. Returns the visited
/// `(z, Q)` points, the path, and the best lengths reached.
fn alternation(
    p: &Pmf,
    problem: &ReducedProblem<'_>,
    iterations: &mut u64,
) -> (Vec<(f64, Pmf)>, Vec<f64>, LengthAssignment) {
    let mut lengths = shannon_lengths(p, false);
    let mut best =
        primal_cost(p, &lengths, problem.mode, problem.l_th).unwrap_or(f64::INFINITY);
    let mut path = vec![best];
    let mut points = Vec::new();
    let mut best_lengths = lengths.clone();
    for _ in 0..80 {
        *iterations += 1;
        let Some((z, q)) = closed_form_point(p, &lengths, problem.mode, problem.l_th) else {
            break;
        };
        points.push((z, q.clone()));
        let Some(candidate) = evaluate_candidate(p, problem, z, q) else {
            break;
        };
        if candidate.primal >= best - 1e-15 {
            break;
        }
        best = candidate.primal;
        path.push(best);
        lengths = candidate.lengths.clone();
        best_lengths = candidate.lengths;
    }
    (points, path, best_lengths)
}

/// Drives the alternation map to its fixed point and returns a candidate
/// whose `(z, Q)` is exactly the closed form of the reported lengths.
///
/// The raw map spirals around the saddle instead of contracting onto it, so
/// after a few full steps the iterate is damped: averaging two length
/// assignments keeps the Kraft sum at most one by Cauchy-Schwarz. The final
/// lengths are renormalized to a unit Kraft sum (which can only shorten
/// them) and reported as-is rather than passed through the map once more.
fn polish(
    p: &Pmf,
    problem: &ReducedProblem<'_>,
    start: &LengthAssignment,
    iterations: &mut u64,
) -> Option<Scored> {
    let mut lengths = start.clone();
    if !primal_cost(p, &lengths, problem.mode, problem.l_th)
        .ok()?
        .is_finite()
    {
        return None;
    }
    for round in 0..2000 {
        *iterations += 1;
        let (z, q) = closed_form_point(p, &lengths, problem.mode, problem.l_th)?;
        let mapped = evaluate_candidate(p, problem, z, q)?.lengths;
        let residual = lengths
            .lengths()
            .iter()
            .zip(mapped.lengths())
            .map(|(&a, &b)| (a - b).abs() / (1.0 + a.abs()))
            .fold(0.0f64, f64::max);
        lengths = if round < 8 {
            mapped
        } else {
            LengthAssignment::from_reals(
                lengths
                    .lengths()
                    .iter()
                    .zip(mapped.lengths())
                    .map(|(&a, &b)| 0.5 * (a + b))
                    .collect(),
            )
            .ok()?
        };
        if residual <= 1e-13 {
            break;
        }
    }
    let weights: Vec<f64> = lengths.lengths().iter().map(|&l| (-l).exp2()).collect();
    let p_star = Pmf::new(&weights).ok()?;
    let lengths =
        LengthAssignment::from_reals(p_star.probs().iter().map(|&px| -px.log2()).collect())
            .ok()?;
    let primal = primal_cost(p, &lengths, problem.mode, problem.l_th).ok()?;
    let (z, q) = closed_form_point(p, &lengths, problem.mode, problem.l_th)?;
    let dual = problem.value(z, &masses_of(problem.part, &q));
    let spread = gradient_spread(p, &q, &lengths, z);
    Some(Scored {
        z,
        q,
        p_star,
        lengths,
        primal,
        dual,
        spread,
    })
}

/// Solves the age maxmin: the cost `E[L] + E[L²]/(2 E[L])` of the returned
/// real lengths is minimal over all Kraft-feasible assignments, and the
/// average age of the scheme using them is `cost - 1/2`.
pub fn solve_age(p: &Pmf, opts: &SolverOptions) -> Result<OptResult, SolverError> {
    opts.validate()?;
    solve(p, Mode::Age, 0.0, opts)
}

/// Solves the delay maxmin for Poisson arrivals of rate `lambda`.
///
/// Requires `H(P) < 1/λ`; when the stronger margin
/// `H(P) + log2(1 + 1/√2) < 1/λ` fails, the saddle guarantee is absent and
/// the result comes from the direct primal oracle, flagged in `notes`.
pub fn solve_delay(p: &Pmf, lambda: f64, opts: &SolverOptions) -> Result<OptResult, SolverError> {
    opts.validate()?;
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(SolverError::InvalidRate(lambda));
    }
    let l_th = lambda.recip();
    let entropy = p.entropy();
    if entropy >= l_th {
        return Err(SolverError::Unstable { entropy, l_th });
    }
    if entropy + guarantee_margin() >= l_th {
        return fallback_delay(p, lambda, l_th, opts);
    }
    solve(p, Mode::Delay, l_th, opts)
}

fn linspace(hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| hi * j as f64 / (n - 1) as f64).collect()
}

fn solve(p: &Pmf, mode: Mode, l_th: f64, opts: &SolverOptions) -> Result<OptResult, SolverError> {
    let part = p.group_equal_probs(GROUPING_TOL);
    let problem = ReducedProblem {
        part: &part,
        mode,
        l_th,
    };
    let mut iterations = 0u64;
    let mut notes: Vec<String> = Vec::new();
    let p_masses: Vec<f64> = (0..part.num_groups()).map(|i| part.group_mass(i)).collect();

    // Grid sweep over z with warm-started inner ascents. The age objective is
    // infeasible past 1 + √3, so the range is capped there; the delay
    // objective decays to -∞, so the range grows until the argmax is
    // interior.
    let mut z_hi = match mode {
        Mode::Age => z_bound(p).min(1.0 + 3.0f64.sqrt()),
        Mode::Delay => {
            let shannon = shannon_lengths(p, false);
            let (m1, m2) = moments(p, &shannon)?;
            (4.0 * m2.sqrt() / (l_th - m1)).max(1.0)
        }
    };
    let n = opts.z_grid_points;
    let mut grid: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    let mut expansions = 0u32;
    loop {
        grid.clear();
        let mut warm = p_masses.clone();
        for z in linspace(z_hi, n) {
            let mut masses = warm.clone();
            let value = problem.maximize(z, &mut masses, opts, &mut iterations);
            warm = masses.clone();
            grid.push((z, value, masses));
        }
        let argmax = grid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(j, _)| j)
            .unwrap();
        if mode == Mode::Delay && argmax + 1 == n && expansions < 60 {
            z_hi *= 2.0;
            expansions += 1;
            continue;
        }
        break;
    }

    // Golden-section refinement of up to three distinct local maxima.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| grid[b].1.total_cmp(&grid[a].1));
    let mut refined: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    let is_local_max = |j: usize| {
        (j == 0 || grid[j].1 >= grid[j - 1].1) && (j + 1 == n || grid[j].1 >= grid[j + 1].1)
    };
    for &j in order.iter() {
        if refined.len() >= 3 {
            break;
        }
        if !is_local_max(j) && !refined.is_empty() {
            continue;
        }
        let lo = grid[j.saturating_sub(1)].0;
        let hi = grid[(j + 1).min(n - 1)].0;
        refined.push(golden_refine(&problem, lo, hi, &grid[j].2, opts, &mut iterations));
    }

    // Random restarts of the inner ascent at the best refined z.
    let best_refined = refined
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .2.total_cmp(&b.1 .2))
        .map(|(j, _)| j)
        .unwrap();
    let (best_z, mut best_masses, mut best_value) = refined[best_refined].clone();
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.multistarts {
        let mut masses: Vec<f64> = (0..part.num_groups())
            .map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-12)
            .collect();
        let sum: f64 = masses.iter().sum();
        for m in masses.iter_mut() {
            *m /= sum;
        }
        let value = problem.maximize(best_z, &mut masses, opts, &mut iterations);
        if value > best_value {
            best_value = value;
            best_masses = masses;
        }
    }

    // Candidate pool: the Shannon anchor at z = 0, every refined maximum,
    // the multistart winner, and the alternation path.
    let mut points: Vec<(f64, Pmf)> = Vec::new();
    points.push((0.0, Pmf::new(&part.expand(&per_symbol(&part, &p_masses)))?));
    for (z, masses, _) in &refined {
        points.push((*z, Pmf::new(&part.expand(&per_symbol(&part, masses)))?));
    }
    points.push((
        best_z,
        Pmf::new(&part.expand(&per_symbol(&part, &best_masses)))?,
    ));
    let (alt_points, alternation_path, alt_lengths) = alternation(p, &problem, &mut iterations);
    points.extend(alt_points);
    let mut pool: Vec<Scored> = points
        .into_iter()
        .filter_map(|(z, q)| evaluate_candidate(p, &problem, z, q))
        .collect();

    // Polished fixed points, seeded by the best pool member and by the
    // alternation output.
    let pool_seed = pool
        .iter()
        .min_by(|a, b| a.primal.total_cmp(&b.primal))
        .map(|scored| scored.lengths.clone());
    if let Some(seed) = pool_seed {
        if let Some(scored) = polish(p, &problem, &seed, &mut iterations) {
            pool.push(scored);
        }
    }
    if let Some(scored) = polish(p, &problem, &alt_lengths, &mut iterations) {
        pool.push(scored);
    }
    // Third basin start: the flat real-length code.
    let flat = LengthAssignment::from_reals(vec![(p.len() as f64).log2(); p.len()])?;
    if let Some(scored) = polish(p, &problem, &flat, &mut iterations) {
        pool.push(scored);
    }

    let mut best: Option<Scored> = None;
    let mut best_dual = grid.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
    for scored in pool {
        best_dual = best_dual.max(scored.dual);
        if best.as_ref().is_none_or(|current| beats(&scored, current)) {
            best = Some(scored);
        }
    }
    let selected = best.expect("the z = 0 anchor always evaluates");
    let duality_gap = (selected.primal - best_dual).abs();
    let converged = duality_gap <= DUALITY_TOL;
    if !converged {
        notes.push(format!(
            "duality gap {duality_gap:.3e} above {DUALITY_TOL:.0e} after the search budget"
        ));
    }
    Ok(OptResult {
        z_star: selected.z,
        q_star: selected.q,
        p_star: selected.p_star,
        lengths: selected.lengths,
        cost: selected.primal,
        iterations,
        converged,
        duality_gap,
        mode,
        l_th: (mode == Mode::Delay).then_some(l_th),
        alternation_path,
        notes,
    })
}

fn per_symbol(part: &Partition, masses: &[f64]) -> Vec<f64> {
    (0..part.num_groups())
        .map(|i| masses[i] / part.group_size(i) as f64)
        .collect()
}

fn golden_refine(
    problem: &ReducedProblem<'_>,
    lo: f64,
    hi: f64,
    warm: &[f64],
    opts: &SolverOptions,
    iterations: &mut u64,
) -> (f64, Vec<f64>, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut masses = warm.to_vec();
    let eval = |z: f64, masses: &mut Vec<f64>, iterations: &mut u64| {
        problem.maximize(z, masses, opts, iterations)
    };
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = eval(x1, &mut masses, iterations);
    let mut f2 = eval(x2, &mut masses, iterations);
    let mut best = if f1 >= f2 {
        (x1, masses.clone(), f1)
    } else {
        (x2, masses.clone(), f2)
    };
    while b - a > Z_REFINE_TOL {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = eval(x1, &mut masses, iterations);
            if f1 > best.2 {
                best = (x1, masses.clone(), f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = eval(x2, &mut masses, iterations);
            if f2 > best.2 {
                best = (x2, masses.clone(), f2);
            }
        }
    }
    best
}

fn fallback_delay(
    p: &Pmf,
    lambda: f64,
    l_th: f64,
    opts: &SolverOptions,
) -> Result<OptResult, SolverError> {
    let (lengths, cost) = direct_oracle(p, Mode::Delay, Some(lambda), opts)?;
    let part = p.group_equal_probs(GROUPING_TOL);
    let problem = ReducedProblem {
        part: &part,
        mode: Mode::Delay,
        l_th,
    };
    let mut iterations = 0u64;
    let (z, q) =
        closed_form_point(p, &lengths, Mode::Delay, l_th).ok_or(SolverError::Unstable {
            entropy: p.entropy(),
            l_th,
        })?;
    let dual = problem.value(z, &masses_of(&part, &q));
    let p_star = Pmf::new(
        &lengths
            .lengths()
            .iter()
            .map(|&l| (-l).exp2())
            .collect::<Vec<_>>(),
    )?;
    let duality_gap = (cost - dual).abs();
    let converged = duality_gap <= DUALITY_TOL;
    iterations += opts.inner_max_iters.min(1);
    Ok(OptResult {
        z_star: z,
        q_star: q,
        p_star,
        lengths,
        cost,
        iterations,
        converged,
        duality_gap,
        mode: Mode::Delay,
        l_th: Some(l_th),
        alternation_path: vec![cost],
        notes: vec![format!(
            "theorem-guarantee absent: H(P) + log2(1 + 1/√2) = {:.6} is not below 1/λ = {:.6}; \
             solved by the direct primal oracle",
            p.entropy() + guarantee_margin(),
            l_th
        )],
    })
}

/// Minimizes the primal cost directly over `ℓ = -log2 q`, `q` on the simplex,
/// by multistart exponentiated-gradient descent. Independent of the maxmin
/// machinery; used to cross-validate solver outputs.
pub fn direct_oracle(
    p: &Pmf,
    mode: Mode,
    lambda: Option<f64>,
    opts: &SolverOptions,
) -> Result<(LengthAssignment, f64), SolverError> {
    opts.validate()?;
    let l_th = match mode {
        Mode::Age => 0.0,
        Mode::Delay => {
            let lambda = lambda.ok_or(SolverError::MissingRate)?;
            if !lambda.is_finite() || lambda <= 0.0 {
                return Err(SolverError::InvalidRate(lambda));
            }
            let l_th = lambda.recip();
            if p.entropy() >= l_th {
                return Err(SolverError::Unstable {
                    entropy: p.entropy(),
                    l_th,
                });
            }
            l_th
        }
    };
    let n = p.len();
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    rng.set_stream(9);
    let mut starts: Vec<Vec<f64>> = vec![p.probs().to_vec(), vec![(n as f64).recip(); n]];
    while starts.len() < opts.multistarts.max(2) {
        let mut q: Vec<f64> = (0..n)
            .map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-12)
            .collect();
        let sum: f64 = q.iter().sum();
        for v in q.iter_mut() {
            *v /= sum;
        }
        starts.push(q);
    }
    let mut best_q: Option<Vec<f64>> = None;
    let mut best_value = f64::INFINITY;
    for start in starts {
        let (q, value) = oracle_descend(p, start, mode, l_th, opts);
        if value < best_value {
            best_value = value;
            best_q = Some(q);
        }
    }
    let q = best_q.ok_or(SolverError::Unstable {
        entropy: p.entropy(),
        l_th,
    })?;
    let lengths = LengthAssignment::from_reals(q.iter().map(|&v| -v.log2()).collect())?;
    Ok((lengths, best_value))
}

fn oracle_value(p: &Pmf, q: &[f64], mode: Mode, l_th: f64) -> f64 {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (&px, &qx) in p.probs().iter().zip(q) {
        let l = -qx.log2();
        m1 += px * l;
        m2 += px * l * l;
    }
    match mode {
        Mode::Age => m1 + m2 / (2.0 * m1),
        Mode::Delay => {
            if m1 >= l_th {
                f64::INFINITY
            } else {
                m2 / (2.0 * (l_th - m1)) + m1
            }
        }
    }
}

fn oracle_descend(
    p: &Pmf,
    mut q: Vec<f64>,
    mode: Mode,
    l_th: f64,
    opts: &SolverOptions,
) -> (Vec<f64>, f64) {
    const LN_2: f64 = std::f64::consts::LN_2;
    let n = q.len();
    let mut value = oracle_value(p, &q, mode, l_th);
    let mut eta = 0.25;
    let mut stall = 0u32;
    let mut trial = vec![0.0; n];
    for _ in 0..opts.inner_max_iters {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let lengths: Vec<f64> = q.iter().map(|&qx| -qx.log2()).collect();
        for (&px, &l) in p.probs().iter().zip(&lengths) {
            m1 += px * l;
            m2 += px * l * l;
        }
        let (f1, f2) = match mode {
            Mode::Age => (1.0 - m2 / (2.0 * m1 * m1), 1.0 / (2.0 * m1)),
            Mode::Delay => {
                let slack = l_th - m1;
                (m2 / (2.0 * slack * slack) + 1.0, 1.0 / (2.0 * slack))
            }
        };
        let grads: Vec<f64> = p
            .probs()
            .iter()
            .zip(&q)
            .zip(&lengths)
            .map(|((&px, &qx), &l)| -(px / (qx * LN_2)) * (f1 + 2.0 * l * f2))
            .collect();
        let mean: f64 = q.iter().zip(&grads).map(|(&qx, &g)| qx * g).sum();
        let mut improved = false;
        while eta >= 1e-16 {
            let mut sum = 0.0;
            for i in 0..n {
                trial[i] = q[i] * (-eta * (grads[i] - mean)).clamp(-30.0, 30.0).exp();
                sum += trial[i];
            }
            for t in trial.iter_mut() {
                *t /= sum;
            }
            let trial_value = oracle_value(p, &trial, mode, l_th);
            if trial_value < value {
                let gain = value - trial_value;
                q.copy_from_slice(&trial);
                value = trial_value;
                improved = true;
                if gain <= opts.inner_tol * (1.0 + value.abs()) {
                    stall += 1;
                } else {
                    stall = 0;
                }
                eta = (eta * 1.5).min(64.0);
                break;
            }
            eta *= 0.5;
        }
        if !improved || stall >= 3 {
            break;
        }
    }
    (q, value)
}

/// Verifies the saddle-point conditions on a finished result: the lengths are
/// the Shannon lengths of the normalized weights, `(z*, Q*)` is first-order
/// stationary at those lengths, and every weight is nonnegative.
pub fn saddle_check(p: &Pmf, result: &OptResult, mode: Mode) -> Result<SaddleReport, SolverError> {
    let l_th = match mode {
        Mode::Age => 0.0,
        Mode::Delay => result.l_th.ok_or(SolverError::MissingThreshold)?,
    };
    let g = varform::GWeights::new(p, result.z_star, &result.q_star, mode)?;
    let total: f64 = g.values().iter().map(|&v| v.max(0.0)).sum();
    let mut messages = Vec::new();

    let mut shannon_gap = 0.0f64;
    for (x, &gx) in g.values().iter().enumerate() {
        let ideal = -(gx.max(1e-300) / total).log2();
        let dev = (result.lengths.get(x) - ideal).abs() / (1.0 + ideal.abs());
        shannon_gap = shannon_gap.max(dev);
    }
    if shannon_gap > DUALITY_TOL {
        messages.push(format!(
            "lengths deviate from the Shannon lengths of the normalized weights by {shannon_gap:.3e}"
        ));
    }

    let z = result.z_star;
    let mut dz = 0.0;
    let mut m1 = 0.0;
    for (x, (&px, &qx)) in p.probs().iter().zip(result.q_star.probs()).enumerate() {
        let l = result.lengths.get(x);
        let quad_slope = match mode {
            Mode::Age => -z * px,
            Mode::Delay => z * px,
        };
        dz += l * (quad_slope + (qx * px).sqrt());
        m1 += px * l;
    }
    if mode == Mode::Delay {
        dz -= z * l_th;
    }
    let z_stationarity = dz.abs() / (1.0 + m1);
    if z_stationarity > DUALITY_TOL {
        messages.push(format!(
            "objective is not stationary in z: normalized derivative {z_stationarity:.3e}"
        ));
    }

    let q_stationarity = if z == 0.0 {
        0.0
    } else {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (x, (&px, &qx)) in p.probs().iter().zip(result.q_star.probs()).enumerate() {
            let t = (z / 2.0) * (px / qx).sqrt() * result.lengths.get(x);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        (hi - lo) / (hi.abs() + 1e-300)
    };
    if q_stationarity > DUALITY_TOL {
        messages.push(format!(
            "objective is not stationary in Q: gradient spread {q_stationarity:.3e}"
        ));
    }

    let min_weight = g.min();
    if min_weight < -FEASIBILITY_SLACK {
        messages.push(format!("negative tilt weight {min_weight:.3e}"));
    }

    Ok(SaddleReport {
        shannon_gap,
        z_stationarity,
        q_stationarity,
        min_weight,
        passed: messages.is_empty(),
        messages,
    })
}
