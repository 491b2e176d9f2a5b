//! Discrete-event simulators for the memoryless update scheme and for the
//! M/G/1 queue fed by codeword-length service times.
//!
//! The update simulator works in bit slots: the transmitter sends one bit per
//! slot, picks up the freshest symbol the moment the previous codeword
//! finishes, and skips every symbol that arrives while the channel is busy.
//! Receptions split time into renewal cycles; with `S_k` the k-th reception
//! slot, the cycle statistics are `Y_k = S_k - S_{k-1}`, `Z_k` the age right
//! after the k-th reception, and the per-cycle age mass
//! `R_k = Y_k Z_{k-1} + Y_k (Y_k - 1) / 2`, so the time-average age over the
//! recorded window is `sum R_k / sum Y_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::age::RandomizedScheme;
use crate::codec::{CodeBook, CodecError};
use crate::pmf::Pmf;

/// Smallest number of usable (post-warm-up) cycles for a meaningful report.
pub const MIN_CYCLES: u64 = 10;

/// Smallest accepted arrival count for the queue simulator.
pub const MIN_ARRIVALS: u64 = 10_000;

/// Target number of batches for batch-means standard errors.
const SE_BATCHES: usize = 50;

/// RNG stream ids, one per random role, so runs stay reproducible per seed
/// and the roles stay independent of each other.
const STREAM_SYMBOLS: u64 = 0;
const STREAM_COINS: u64 = 1;
const STREAM_ERASURES: u64 = 2;
const STREAM_ARRIVALS: u64 = 3;

/// Errors raised by the simulators.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("codebook covers {got} symbols but the pmf has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("horizon {horizon} is too short; need at least {required} slots")]
    HorizonTooShort { horizon: u64, required: u64 },
    #[error("only {cycles} usable cycles completed; need at least {min} — increase the horizon", min = MIN_CYCLES)]
    TooFewCycles { cycles: u64 },
    #[error("erasure probability {0} must lie in [0, 1)")]
    EpsilonOutOfRange(f64),
    #[error("arrival rate {0} must be finite and positive")]
    InvalidRate(f64),
    #[error("{0} arrivals requested; need at least {min}", min = MIN_ARRIVALS)]
    TooFewArrivals(u64),
    #[error("skip codeword length {0} must be a positive integer number of bits")]
    NonIntegerSkip(f64),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Configuration of one update-scheme simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Horizon in bit slots.
    pub horizon: u64,
    /// Master seed; each random role derives its own stream from it.
    pub seed: u64,
    /// Per-bit erasure probability, retransmission until success.
    pub epsilon: f64,
    /// Optional randomized skipping; `None` means transmit every pickup.
    pub scheme: Option<RandomizedScheme>,
    /// Arrival rate, used by queue-mode front-ends.
    pub lambda: Option<f64>,
    /// Record per-cycle statistics in the report.
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            seed: 0,
            epsilon: 0.0,
            scheme: None,
            lambda: None,
            record_trace: false,
        }
    }
}

/// One recorded renewal cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleStat {
    /// Cycle index; numbering starts at 2 because the first cycle is warm-up.
    pub cycle: u64,
    /// Cycle length `Y_k` in slots.
    pub y: u64,
    /// Age right after the reception that closes the cycle.
    pub z: u64,
    /// Age mass accumulated over the cycle.
    pub r: f64,
}

/// Empirical averages and renewal statistics from one simulation run.
///
/// For the update scheme `empirical_average` is the time-average age and the
/// `mean_*` fields are per-cycle averages of `Y`, `Y²`, `Z` and `R`. For the
/// queue `empirical_average` is the mean sojourn time and the renewal slots
/// are reused as service (`y`), waiting (`z`) and sojourn (`r`) averages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub empirical_average: f64,
    pub mean_y: f64,
    pub mean_y_sq: f64,
    pub mean_z: f64,
    pub mean_r: f64,
    pub cycles: u64,
    /// Batch-means standard error of `empirical_average`.
    pub standard_error: f64,
    pub se_y: f64,
    pub se_y_sq: f64,
    pub se_z: f64,
    pub se_r: f64,
    /// Observation window covered by the recorded statistics.
    pub total_slots: f64,
    pub warnings: Vec<String>,
    pub trace: Option<Vec<CycleStat>>,
}

impl SimReport {
    /// Pretty JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-cycle trace as `cycle,Y,Z,R` rows, when recorded.
    pub fn trace_csv(&self) -> Option<String> {
        self.trace.as_ref().map(|rows| {
            let mut out = String::from("cycle,Y,Z,R\n");
            for row in rows {
                out.push_str(&format!("{},{},{},{}\n", row.cycle, row.y, row.z, row.r));
            }
            out
        })
    }

    /// Combines two independent runs by weighted averaging: renewal means by
    /// cycle count, the headline average by observation window, standard
    /// errors in quadrature. The operation is associative.
    pub fn merge(&self, other: &SimReport) -> SimReport {
        let wc = (self.cycles as f64, other.cycles as f64);
        let ws = (self.total_slots, other.total_slots);
        let avg = |a: f64, b: f64, w: (f64, f64)| (w.0 * a + w.1 * b) / (w.0 + w.1);
        let se = |a: f64, b: f64, w: (f64, f64)| {
            ((w.0 * a).powi(2) + (w.1 * b).powi(2)).sqrt() / (w.0 + w.1)
        };
        let mut warnings = self.warnings.clone();
        warnings.extend(other.warnings.iter().cloned());
        let trace = match (&self.trace, &other.trace) {
            (None, None) => None,
            (a, b) => Some(
                a.iter()
                    .chain(b.iter())
                    .flat_map(|rows| rows.iter().cloned())
                    .collect(),
            ),
        };
        SimReport {
            empirical_average: avg(self.empirical_average, other.empirical_average, ws),
            mean_y: avg(self.mean_y, other.mean_y, wc),
            mean_y_sq: avg(self.mean_y_sq, other.mean_y_sq, wc),
            mean_z: avg(self.mean_z, other.mean_z, wc),
            mean_r: avg(self.mean_r, other.mean_r, wc),
            cycles: self.cycles + other.cycles,
            standard_error: se(self.standard_error, other.standard_error, ws),
            se_y: se(self.se_y, other.se_y, wc),
            se_y_sq: se(self.se_y_sq, other.se_y_sq, wc),
            se_z: se(self.se_z, other.se_z, wc),
            se_r: se(self.se_r, other.se_r, wc),
            total_slots: self.total_slots + other.total_slots,
            warnings,
            trace,
        }
    }
}

/// Closed-form renewal moments and their SE-normalized residuals against one
/// simulated report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenewalResiduals {
    pub expected_y: f64,
    pub expected_y_sq: f64,
    pub expected_z: f64,
    pub expected_r: f64,
    pub residual_y: f64,
    pub residual_y_sq: f64,
    pub residual_z: f64,
    pub residual_r: f64,
}

impl RenewalResiduals {
    /// Largest residual magnitude, the quantity checked against 4σ.
    pub fn max_abs(&self) -> f64 {
        [
            self.residual_y,
            self.residual_y_sq,
            self.residual_z,
            self.residual_r,
        ]
        .into_iter()
        .fold(0.0f64, |acc, r| acc.max(r.abs()))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn cumulative(p: &Pmf) -> Vec<f64> {
    let mut acc = 0.0;
    p.probs()
        .iter()
        .map(|&px| {
            acc += px;
            acc
        })
        .collect()
}

fn draw_symbol(cdf: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Slots needed to deliver `bits` bits when each bit is erased with
/// probability `eps` and retransmitted until it gets through.
fn transmit_duration(bits: u64, eps: f64, rng: &mut ChaCha12Rng) -> u64 {
    if eps <= 0.0 {
        return bits;
    }
    let ln_eps = eps.ln();
    let mut slots = 0u64;
    for _ in 0..bits {
        let u: f64 = rng.random();
        slots += 1 + ((1.0 - u).ln() / ln_eps) as u64;
    }
    slots
}

/// Batch-means standard error of the mean of `values`.
fn batch_se(values: &[f64]) -> f64 {
    batch_ratio_se(values, &[])
}

/// Batch-means standard error of `sum(num)/sum(den)`; an empty denominator
/// means a plain mean. Robust to serial correlation between adjacent entries.
fn batch_ratio_se(num: &[f64], den: &[f64]) -> f64 {
    let n = num.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let batches = SE_BATCHES.min(n);
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let lo = b * size;
            let hi = lo + size;
            let top: f64 = num[lo..hi].iter().sum();
            let bottom: f64 = if den.is_empty() {
                size as f64
            } else {
                den[lo..hi].iter().sum()
            };
            top / bottom
        })
        .collect();
    let center = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - center).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Simulates the memoryless update scheme over `cfg.horizon` bit slots and
/// returns the time-average age together with per-cycle renewal statistics.
///
/// Every pickup draws a fresh symbol. Without a scheme the symbol's codeword
/// is always sent; with one, symbol `x` is sent with probability `θ(x)` and
/// the empty-update codeword otherwise. Each bit is erased independently
/// with probability `cfg.epsilon` and retransmitted until it gets through.
/// The receiver's age resets only on informative receptions. The first cycle
/// starts from the atypical age 0, so it is discarded.
pub fn simulate_update(p: &Pmf, book: &CodeBook, cfg: &SimConfig) -> Result<SimReport, SimError> {
    if book.len() != p.len() {
        return Err(SimError::SizeMismatch {
            expected: p.len(),
            got: book.len(),
        });
    }
    if !(0.0..1.0).contains(&cfg.epsilon) || !cfg.epsilon.is_finite() {
        return Err(SimError::EpsilonOutOfRange(cfg.epsilon));
    }
    let lengths = book.lengths();
    let (theta, skip_len) = match &cfg.scheme {
        Some(scheme) => {
            if scheme.theta().len() != p.len() {
                return Err(SimError::SizeMismatch {
                    expected: p.len(),
                    got: scheme.theta().len(),
                });
            }
            let skip = scheme.skip_length();
            if skip.fract() != 0.0 || skip < 1.0 {
                return Err(SimError::NonIntegerSkip(skip));
            }
            (Some(scheme.theta().to_vec()), skip as u64)
        }
        None => (None, 0),
    };
    let max_len = lengths.iter().copied().max().unwrap_or(0).max(skip_len);
    let required = 100 * max_len;
    if cfg.horizon < required {
        return Err(SimError::HorizonTooShort {
            horizon: cfg.horizon,
            required,
        });
    }

    let mut sym_rng = stream_rng(cfg.seed, STREAM_SYMBOLS);
    let mut coin_rng = stream_rng(cfg.seed, STREAM_COINS);
    let mut erase_rng = stream_rng(cfg.seed, STREAM_ERASURES);
    let cdf = cumulative(p);

    let mut slot = 0u64;
    let mut z_prev = 0u64;
    let mut y_accum = 0u64;
    let mut warmed_up = false;
    let mut ys: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    let mut rs: Vec<f64> = Vec::new();
    let mut trace = cfg.record_trace.then(Vec::new);

    while slot < cfg.horizon {
        let x = draw_symbol(&cdf, &mut sym_rng);
        let (bits, informative) = match &theta {
            Some(t) => {
                if coin_rng.random::<f64>() < t[x] {
                    (lengths[x], true)
                } else {
                    (skip_len, false)
                }
            }
            None => (lengths[x], true),
        };
        let duration = transmit_duration(bits, cfg.epsilon, &mut erase_rng);
        slot += duration;
        y_accum += duration;
        if informative {
            if warmed_up {
                let y = y_accum as f64;
                let r = y * z_prev as f64 + y * (y - 1.0) / 2.0;
                if let Some(rows) = trace.as_mut() {
                    rows.push(CycleStat {
                        cycle: rs.len() as u64 + 2,
                        y: y_accum,
                        z: duration,
                        r,
                    });
                }
                ys.push(y);
                zs.push(duration as f64);
                rs.push(r);
            } else {
                warmed_up = true;
            }
            z_prev = duration;
            y_accum = 0;
        }
    }

    let cycles = ys.len() as u64;
    if cycles < MIN_CYCLES {
        return Err(SimError::TooFewCycles { cycles });
    }
    let total_slots: f64 = ys.iter().sum();
    Ok(SimReport {
        empirical_average: rs.iter().sum::<f64>() / total_slots,
        mean_y: mean(&ys),
        mean_y_sq: ys.iter().map(|y| y * y).sum::<f64>() / cycles as f64,
        mean_z: mean(&zs),
        mean_r: mean(&rs),
        cycles,
        standard_error: batch_ratio_se(&rs, &ys),
        se_y: batch_se(&ys),
        se_y_sq: batch_se(&ys.iter().map(|y| y * y).collect::<Vec<_>>()),
        se_z: batch_se(&zs),
        se_r: batch_se(&rs),
        total_slots,
        warnings: Vec::new(),
        trace,
    })
}

/// Closed-form cycle moments of the update scheme, compared against a
/// simulated report; each residual is `(empirical − expected) / SE`.
///
/// With `t = E[θ(X)]`, per-pickup length `L` (codeword with probability
/// `θ(x) P(x)`, skip word otherwise) and per-bit erasure `ε`, the delivered
/// durations inflate to `E[D] = E[L]/(1−ε)` and
/// `E[D²] = (ε E[L] + E[L²])/(1−ε)²`, and the cycle moments are
/// `E[Y] = E[D]/t`, `E[Z] = E[D | informative]`,
/// `E[Y²] = E[D²]/t + 2 E[Y] d_skip (1−t)/t` with `d_skip` the inflated skip
/// duration, and `E[R] = E[Y²]/2 + E[Y](E[Z] − 1/2)`.
pub fn renewal_identities(
    report: &SimReport,
    p: &Pmf,
    lengths: &[u64],
    scheme: Option<&RandomizedScheme>,
    epsilon: f64,
) -> Result<RenewalResiduals, SimError> {
    if lengths.len() != p.len() {
        return Err(SimError::SizeMismatch {
            expected: p.len(),
            got: lengths.len(),
        });
    }
    if !(0.0..1.0).contains(&epsilon) || !epsilon.is_finite() {
        return Err(SimError::EpsilonOutOfRange(epsilon));
    }
    let survive = 1.0 - epsilon;
    let (t, skip_len) = match scheme {
        Some(s) => {
            if s.theta().len() != p.len() {
                return Err(SimError::SizeMismatch {
                    expected: p.len(),
                    got: s.theta().len(),
                });
            }
            let t: f64 = p
                .probs()
                .iter()
                .zip(s.theta())
                .map(|(&px, &tx)| px * tx)
                .sum();
            (t, s.skip_length())
        }
        None => (1.0, 0.0),
    };
    let theta_of = |x: usize| scheme.map_or(1.0, |s| s.theta()[x]);
    let mut informative_mass = 0.0;
    let mut informative_len = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (x, &px) in p.probs().iter().enumerate() {
        let lx = lengths[x] as f64;
        let w = px * theta_of(x);
        informative_mass += w;
        informative_len += w * lx;
        m1 += w * lx + px * (1.0 - theta_of(x)) * skip_len;
        m2 += w * lx * lx + px * (1.0 - theta_of(x)) * skip_len * skip_len;
    }
    let d1 = m1 / survive;
    let d2 = (epsilon * m1 + m2) / (survive * survive);
    let expected_y = d1 / t;
    let expected_z = informative_len / informative_mass / survive;
    let skip_duration = skip_len / survive;
    let expected_y_sq = d2 / t + 2.0 * expected_y * skip_duration * (1.0 - t) / t;
    let expected_r = expected_y_sq / 2.0 + expected_y * (expected_z - 0.5);

    let residual = |empirical: f64, expected: f64, se: f64| {
        let diff = empirical - expected;
        if se > 0.0 {
            diff / se
        } else if diff.abs() < 1e-9 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    Ok(RenewalResiduals {
        expected_y,
        expected_y_sq,
        expected_z,
        expected_r,
        residual_y: residual(report.mean_y, expected_y, report.se_y),
        residual_y_sq: residual(report.mean_y_sq, expected_y_sq, report.se_y_sq),
        residual_z: residual(report.mean_z, expected_z, report.se_z),
        residual_r: residual(report.mean_r, expected_r, report.se_r),
    })
}

/// Simulates an FCFS M/G/1 queue with Poisson arrivals of rate `lambda` and
/// service time equal to the codeword length of each arriving symbol, and
/// returns the mean sojourn time (departure minus arrival).
///
/// An unstable configuration (`λ E[L] >= 1`) still returns its estimate but
/// carries a warning. Roughly the first percent of arrivals is discarded as
/// warm-up.
pub fn simulate_mg1(
    p: &Pmf,
    book: &CodeBook,
    lambda: f64,
    n_arrivals: u64,
    seed: u64,
) -> Result<SimReport, SimError> {
    if book.len() != p.len() {
        return Err(SimError::SizeMismatch {
            expected: p.len(),
            got: book.len(),
        });
    }
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(SimError::InvalidRate(lambda));
    }
    if n_arrivals < MIN_ARRIVALS {
        return Err(SimError::TooFewArrivals(n_arrivals));
    }
    let lengths = book.lengths();
    let interarrival = Exp::new(lambda).map_err(|_| SimError::InvalidRate(lambda))?;
    let mut sym_rng = stream_rng(seed, STREAM_SYMBOLS);
    let mut arrival_rng = stream_rng(seed, STREAM_ARRIVALS);
    let cdf = cumulative(p);

    let warmup = n_arrivals / 100;
    let mut wait = 0.0f64;
    let mut prev_service = 0.0f64;
    let mut first = true;
    let mut clock = 0.0f64;
    let mut start_clock = 0.0f64;
    let mut services: Vec<f64> = Vec::new();
    let mut waits: Vec<f64> = Vec::new();
    let mut sojourns: Vec<f64> = Vec::new();
    for i in 0..n_arrivals {
        let gap = if first {
            first = false;
            0.0
        } else {
            interarrival.sample(&mut arrival_rng)
        };
        clock += gap;
        wait = (wait + prev_service - gap).max(0.0);
        let x = draw_symbol(&cdf, &mut sym_rng);
        let service = lengths[x] as f64;
        prev_service = service;
        if i >= warmup {
            if services.is_empty() {
                start_clock = clock;
            }
            services.push(service);
            waits.push(wait);
            sojourns.push(wait + service);
        }
    }

    let rho: f64 = lambda
        * p.probs()
            .iter()
            .zip(&lengths)
            .map(|(&px, &lx)| px * lx as f64)
            .sum::<f64>();
    let mut warnings = Vec::new();
    if rho >= 1.0 {
        warnings.push(format!(
            "unstable queue: λ·E[L] = {rho:.4} >= 1; the sojourn estimate does not converge"
        ));
    }
    Ok(SimReport {
        empirical_average: mean(&sojourns),
        mean_y: mean(&services),
        mean_y_sq: services.iter().map(|s| s * s).sum::<f64>() / services.len() as f64,
        mean_z: mean(&waits),
        mean_r: mean(&sojourns),
        cycles: services.len() as u64,
        standard_error: batch_se(&sojourns),
        se_y: batch_se(&services),
        se_y_sq: batch_se(&services.iter().map(|s| s * s).collect::<Vec<_>>()),
        se_z: batch_se(&waits),
        se_r: batch_se(&sojourns),
        total_slots: clock - start_clock,
        warnings,
        trace: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::age::{average_age_erasure, average_age_randomized, average_delay};
    use crate::codec::{canonical_code, shannon_lengths, LengthAssignment};
    use approx::assert_abs_diff_eq;

    fn fixed_length_book(n: usize, bits: u64) -> CodeBook {
        canonical_code(&LengthAssignment::from_integers(&vec![bits; n])).unwrap()
    }

    fn shannon_book(p: &Pmf) -> CodeBook {
        canonical_code(&shannon_lengths(p, true)).unwrap()
    }

    #[test]
    fn fixed_length_run_is_exact() {
        let p = Pmf::uniform(4).unwrap();
        let book = fixed_length_book(4, 2);
        let cfg = SimConfig {
            horizon: 100_000,
            ..SimConfig::default()
        };
        let report = simulate_update(&p, &book, &cfg).unwrap();
        // Every cycle is identical (Y = Z = 2), so the run is deterministic.
        assert_abs_diff_eq!(report.empirical_average, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(report.mean_y, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.mean_z, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.mean_r, 5.0, epsilon = 1e-12);
        assert_eq!(report.standard_error, 0.0);
        assert!(report.cycles > 49_000);
    }

    #[test]
    fn shannon_code_run_matches_formula() {
        let p = Pmf::zipf(1.0, 8).unwrap();
        let book = shannon_book(&p);
        let expected =
            crate::age::average_age(&p, &book.length_assignment()).unwrap();
        let cfg = SimConfig {
            horizon: 1_000_000,
            seed: 7,
            ..SimConfig::default()
        };
        let report = simulate_update(&p, &book, &cfg).unwrap();
        let slack = (3.0 * report.standard_error).max(1e-3);
        assert!(
            (report.empirical_average - expected).abs() < slack,
            "empirical {} vs formula {} (slack {})",
            report.empirical_average,
            expected,
            slack
        );
    }

    #[test]
    fn randomized_run_matches_formula() {
        // Three symbols carry probability 1/4 and transmit always; the other
        // 61 share the rest and are never transmitted.
        let mut weights = vec![0.25; 3];
        weights.extend(vec![61.0f64.recip() * 0.25; 61]);
        let p = Pmf::new(&weights).unwrap();
        // Two-bit words for the transmitted symbols; the skipped tail gets
        // eight-bit words to keep the book Kraft-feasible.
        let mut lens = vec![2u64; 3];
        lens.extend(vec![8u64; 61]);
        let book = canonical_code(&LengthAssignment::from_integers(&lens)).unwrap();
        let mut theta = vec![1.0; 3];
        theta.extend(vec![0.0; 61]);
        let scheme = RandomizedScheme::new(theta, 2.0).unwrap();
        let expected =
            average_age_randomized(&p, &book.length_assignment(), &scheme).unwrap();
        assert_abs_diff_eq!(expected, 19.0 / 6.0, epsilon = 1e-12);
        let cfg = SimConfig {
            horizon: 1_000_000,
            seed: 11,
            scheme: Some(scheme),
            ..SimConfig::default()
        };
        let report = simulate_update(&p, &book, &cfg).unwrap();
        assert!(
            (report.empirical_average - expected).abs() < 3.0 * report.standard_error,
            "empirical {} vs formula {} (SE {})",
            report.empirical_average,
            expected,
            report.standard_error
        );
    }

    #[test]
    fn erasure_run_matches_inflated_formula() {
        let k = 3u64;
        let p = Pmf::uniform(8).unwrap();
        let book = fixed_length_book(8, k);
        let base = 1.5 * k as f64 - 0.5;
        let expected = average_age_erasure(base, 0.5).unwrap();
        let cfg = SimConfig {
            horizon: 1_000_000,
            seed: 3,
            epsilon: 0.5,
            ..SimConfig::default()
        };
        let report = simulate_update(&p, &book, &cfg).unwrap();
        assert!(
            (report.empirical_average - expected).abs() < 3.0 * report.standard_error,
            "empirical {} vs formula {} (SE {})",
            report.empirical_average,
            expected,
            report.standard_error
        );
        // The run sits a visible constant above the plain 1/(1-eps) scaling.
        let multiplicative_only = base / 0.5;
        let gap = report.empirical_average - multiplicative_only;
        assert!(
            (gap - 1.0).abs() < 3.0 * report.standard_error,
            "gap to multiplicative scaling {} should be near eps/(1-eps) = 1",
            gap
        );
    }

    #[test]
    fn renewal_residuals_vanish_for_deterministic_runs() {
        for k in [1u64, 3, 5] {
            let n = 1usize << k;
            let p = Pmf::uniform(n).unwrap();
            let book = fixed_length_book(n, k);
            let cfg = SimConfig {
                horizon: 50_000,
                ..SimConfig::default()
            };
            let report = simulate_update(&p, &book, &cfg).unwrap();
            let res = renewal_identities(&report, &p, &book.lengths(), None, 0.0).unwrap();
            let kf = k as f64;
            assert_abs_diff_eq!(res.expected_y, kf, epsilon = 1e-12);
            assert_abs_diff_eq!(res.expected_z, kf, epsilon = 1e-12);
            assert_abs_diff_eq!(
                res.expected_r,
                kf * kf / 2.0 + kf * (kf - 0.5),
                epsilon = 1e-12
            );
            assert_eq!(res.max_abs(), 0.0);
        }
    }

    #[test]
    fn renewal_residuals_randomized_example() {
        let mut weights = vec![0.25; 3];
        weights.extend(vec![61.0f64.recip() * 0.25; 61]);
        let p = Pmf::new(&weights).unwrap();
        let mut lens = vec![2u64; 3];
        lens.extend(vec![8u64; 61]);
        let book = canonical_code(&LengthAssignment::from_integers(&lens)).unwrap();
        let mut theta = vec![1.0; 3];
        theta.extend(vec![0.0; 61]);
        let scheme = RandomizedScheme::new(theta, 2.0).unwrap();
        let cfg = SimConfig {
            horizon: 1_000_000,
            seed: 5,
            scheme: Some(scheme.clone()),
            ..SimConfig::default()
        };
        let report = simulate_update(&p, &book, &cfg).unwrap();
        let res =
            renewal_identities(&report, &p, &book.lengths(), Some(&scheme), 0.0).unwrap();
        assert_abs_diff_eq!(res.expected_y, 2.0 / 0.75, epsilon = 1e-12);
        assert!(res.max_abs() < 4.0, "residuals {:?}", res);
    }

    #[test]
    fn renewal_residuals_with_erasures_and_skipping() {
        let p = Pmf::zipf(1.0, 6).unwrap();
        let book = shannon_book(&p);
        let theta = vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
        let scheme =
            RandomizedScheme::new(theta, book.lengths()[0] as f64).unwrap();
        let cfg = SimConfig {
            horizon: 1_000_000,
            seed: 13,
            epsilon: 0.25,
            scheme: Some(scheme.clone()),
            ..SimConfig::default()
        };
        let report = simulate_update(&p, &book, &cfg).unwrap();
        let res =
            renewal_identities(&report, &p, &book.lengths(), Some(&scheme), 0.25).unwrap();
        assert!(res.max_abs() < 4.0, "residuals {:?}", res);
    }

    #[test]
    fn cycle_streams_pass_independence_checks() {
        let p = Pmf::zipf(1.3, 16).unwrap();
        let book = shannon_book(&p);
        let cfg = SimConfig {
            horizon: 500_000,
            seed: 23,
            epsilon: 0.1,
            record_trace: true,
            ..SimConfig::default()
        };
        let report = simulate_update(&p, &book, &cfg).unwrap();
        let rows = report.trace.as_ref().unwrap();
        let rs: Vec<f64> = rows.iter().map(|c| c.r).collect();
        let ys: Vec<f64> = rows.iter().map(|c| c.y as f64).collect();
        let n = rs.len() as f64;
        let lag = |xs: &[f64], k: usize| {
            let a = &xs[..xs.len() - k];
            let b = &xs[k..];
            correlation(a, b)
        };
        // R_k and R_{k+2} are independent; Y_k are iid, so lag-1 vanishes.
        assert!(lag(&rs, 2).abs() < 4.0 / n.sqrt(), "lag-2 R corr {}", lag(&rs, 2));
        assert!(lag(&ys, 1).abs() < 4.0 / n.sqrt(), "lag-1 Y corr {}", lag(&ys, 1));
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(&x, &y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|&x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|&y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn update_simulation_is_reproducible_per_seed() {
        let p = Pmf::zipf(1.0, 8).unwrap();
        let book = shannon_book(&p);
        let cfg = SimConfig {
            horizon: 200_000,
            seed: 99,
            epsilon: 0.2,
            ..SimConfig::default()
        };
        let a = simulate_update(&p, &book, &cfg).unwrap();
        let b = simulate_update(&p, &book, &cfg).unwrap();
        assert_eq!(a.empirical_average, b.empirical_average);
        assert_eq!(a.cycles, b.cycles);
        let other = simulate_update(
            &p,
            &book,
            &SimConfig {
                seed: 100,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(a.empirical_average, other.empirical_average);
    }

    #[test]
    fn update_simulation_validation_errors() {
        let p = Pmf::uniform(4).unwrap();
        let book = fixed_length_book(4, 2);
        let short = SimConfig {
            horizon: 150,
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate_update(&p, &book, &short),
            Err(SimError::HorizonTooShort { required: 200, .. })
        ));
        let bad_eps = SimConfig {
            epsilon: 1.0,
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate_update(&p, &book, &bad_eps),
            Err(SimError::EpsilonOutOfRange(_))
        ));
        let wrong_book = fixed_length_book(5, 3);
        assert!(matches!(
            simulate_update(&p, &wrong_book, &SimConfig::default()),
            Err(SimError::SizeMismatch { .. })
        ));
        // Transmissions are so rare that almost no cycles complete.
        let rare = RandomizedScheme::new(vec![1e-4; 4], 2.0).unwrap();
        let starved = SimConfig {
            horizon: 500,
            scheme: Some(rare),
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate_update(&p, &book, &starved),
            Err(SimError::TooFewCycles { .. })
        ));
        let fractional = RandomizedScheme::new(vec![0.5; 4], 1.5).unwrap();
        let bad_skip = SimConfig {
            scheme: Some(fractional),
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate_update(&p, &book, &bad_skip),
            Err(SimError::NonIntegerSkip(_))
        ));
    }

    #[test]
    fn trace_rows_reconstruct_the_average() {
        let p = Pmf::uniform(4).unwrap();
        let book = fixed_length_book(4, 2);
        let cfg = SimConfig {
            horizon: 10_000,
            record_trace: true,
            ..SimConfig::default()
        };
        let report = simulate_update(&p, &book, &cfg).unwrap();
        let rows = report.trace.as_ref().unwrap();
        assert_eq!(rows.len() as u64, report.cycles);
        assert_eq!(rows[0].cycle, 2);
        let sum_r: f64 = rows.iter().map(|c| c.r).sum();
        let sum_y: f64 = rows.iter().map(|c| c.y as f64).sum();
        assert_abs_diff_eq!(
            sum_r / sum_y,
            report.empirical_average,
            epsilon = 1e-12
        );
        let csv = report.trace_csv().unwrap();
        assert!(csv.starts_with("cycle,Y,Z,R\n2,2,2,5"));
    }

    #[test]
    fn mg1_fixed_service_matches_formula() {
        let p = Pmf::uniform(4).unwrap();
        let book = fixed_length_book(4, 2);
        for (lambda, expected) in [(0.2, 2.0 + 4.0 / (2.0 * 3.0)), (0.01, 2.0 + 4.0 / 196.0)] {
            let report = simulate_mg1(&p, &book, lambda, 1_000_000, 17).unwrap();
            assert!(report.warnings.is_empty());
            let slack = (3.0 * report.standard_error).max(5e-3);
            assert!(
                (report.empirical_average - expected).abs() < slack,
                "λ = {lambda}: empirical {} vs formula {expected} (slack {slack})",
                report.empirical_average
            );
        }
    }

    #[test]
    fn mg1_designed_code_matches_delay_evaluator() {
        let p = Pmf::zipf(1.0, 8).unwrap();
        let book = shannon_book(&p);
        let lambda = 0.05;
        let expected = average_delay(&p, &book.length_assignment(), lambda).unwrap();
        let report = simulate_mg1(&p, &book, lambda, 1_000_000, 29).unwrap();
        assert!(
            (report.empirical_average - expected).abs() < 3.0 * report.standard_error,
            "empirical {} vs formula {expected} (SE {})",
            report.empirical_average,
            report.standard_error
        );
    }

    #[test]
    fn mg1_unstable_configuration_warns() {
        let p = Pmf::uniform(4).unwrap();
        let book = fixed_length_book(4, 2);
        let report = simulate_mg1(&p, &book, 0.6, 10_000, 1).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("unstable")));
        assert!(report.empirical_average.is_finite());
    }

    #[test]
    fn mg1_validation_errors() {
        let p = Pmf::uniform(4).unwrap();
        let book = fixed_length_book(4, 2);
        assert!(matches!(
            simulate_mg1(&p, &book, 0.2, 500, 1),
            Err(SimError::TooFewArrivals(500))
        ));
        assert!(matches!(
            simulate_mg1(&p, &book, 0.0, 10_000, 1),
            Err(SimError::InvalidRate(_))
        ));
        assert!(matches!(
            simulate_mg1(&p, &book, f64::NAN, 10_000, 1),
            Err(SimError::InvalidRate(_))
        ));
    }

    #[test]
    fn report_merge_is_associative_and_weighted() {
        let p = Pmf::zipf(1.0, 8).unwrap();
        let book = shannon_book(&p);
        let run = |seed| {
            simulate_update(
                &p,
                &book,
                &SimConfig {
                    horizon: 100_000,
                    seed,
                    ..SimConfig::default()
                },
            )
            .unwrap()
        };
        let (a, b, c) = (run(1), run(2), run(3));
        let left = a.merge(&b).merge(&c);
        let right = a.merge(&b.merge(&c));
        assert_abs_diff_eq!(
            left.empirical_average,
            right.empirical_average,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(left.mean_y, right.mean_y, epsilon = 1e-12);
        assert_abs_diff_eq!(
            left.standard_error,
            right.standard_error,
            epsilon = 1e-12
        );
        assert_eq!(left.cycles, a.cycles + b.cycles + c.cycles);
        let lo = a
            .empirical_average
            .min(b.empirical_average)
            .min(c.empirical_average);
        let hi = a
            .empirical_average
            .max(b.empirical_average)
            .max(c.empirical_average);
        assert!(left.empirical_average >= lo && left.empirical_average <= hi);
    }

    #[test]
    fn report_serializes_to_json() {
        let p = Pmf::uniform(4).unwrap();
        let book = fixed_length_book(4, 2);
        let report = simulate_update(&p, &book, &SimConfig::default()).unwrap();
        let json = report.to_json();
        assert!(json.contains("\"empirical_average\""));
        let back: SimReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.cycles, report.cycles);
    }
}
