//! The `verify` command: end-to-end consistency checks wiring the solver,
//! the closed-form evaluators, and the simulators together.
//!
//! With a solver design the checks are: duality gap, saddle-point
//! diagnostics, agreement with the independent oracle, update-scheme
//! simulation against the analytic age, and renewal-moment residuals; delay
//! mode adds an M/G/1 simulation against the sojourn-time formula. With
//! explicit `--lengths` only the simulation checks run. One PASS/FAIL line
//! is printed per check and the process exits nonzero when any check fails.

use agecodec::age::{average_age, average_age_erasure, average_age_randomized, average_delay};
use agecodec::codec::{canonical_code, LengthAssignment};
use agecodec::sim::{renewal_identities, simulate_mg1, simulate_update, SimConfig};
use agecodec::solver::{direct_oracle, saddle_check, DUALITY_TOL};
use agecodec::varform::Mode;
use anyhow::{ensure, Result};

use crate::input::RunSpec;

const ORACLE_TOL: f64 = 1e-6;
const RESIDUAL_SIGMAS: f64 = 4.0;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

pub fn run(spec: &RunSpec, horizon: u64, lengths: Option<&LengthAssignment>) -> Result<bool> {
    let p = spec.pmf()?;
    let mut checks = Vec::new();

    let assignment = match lengths {
        Some(given) => {
            ensure!(
                given.len() == p.len(),
                "{} lengths given for {} symbols",
                given.len(),
                p.len()
            );
            given.clone()
        }
        None => {
            let result = spec.solve(&p)?;
            checks.push(Check {
                name: "solver",
                passed: result.converged,
                detail: format!(
                    "cost {:.9}, duality gap {:.3e} (tolerance {DUALITY_TOL:.0e})",
                    result.cost, result.duality_gap
                ),
            });
            let saddle = saddle_check(&p, &result, spec.mode)?;
            let mut detail = format!(
                "shannon gap {:.3e}, z stationarity {:.3e}, q stationarity {:.3e}, min weight {:.3e}",
                saddle.shannon_gap, saddle.z_stationarity, saddle.q_stationarity, saddle.min_weight
            );
            if !saddle.messages.is_empty() {
                detail.push_str(&format!("; {}", saddle.messages.join("; ")));
            }
            checks.push(Check {
                name: "saddle",
                passed: saddle.passed,
                detail,
            });
            let rate = match spec.mode {
                Mode::Age => None,
                Mode::Delay => spec.lambda,
            };
            let (_, oracle_cost) = direct_oracle(&p, spec.mode, rate, &spec.solver)?;
            let gap = (result.cost - oracle_cost).abs();
            checks.push(Check {
                name: "oracle",
                passed: gap < ORACLE_TOL,
                detail: format!(
                    "solver cost {:.9} vs oracle {oracle_cost:.9}, gap {gap:.3e} (tolerance {ORACLE_TOL:.0e})",
                    result.cost
                ),
            });
            result.integer_design(&p)?.lengths
        }
    };

    let book = canonical_code(&assignment)?;
    let scheme = spec.scheme(&assignment)?;
    let base = match &scheme {
        Some(scheme) => average_age_randomized(&p, &assignment, scheme)?,
        None => average_age(&p, &assignment)?,
    };
    let analytic_age = if spec.epsilon > 0.0 {
        average_age_erasure(base, spec.epsilon)?
    } else {
        base
    };
    let cfg = SimConfig {
        horizon,
        seed: spec.seed,
        epsilon: spec.epsilon,
        scheme: scheme.clone(),
        lambda: None,
        record_trace: false,
    };
    let report = simulate_update(&p, &book, &cfg)?;
    let tolerance = (0.01 * analytic_age).max(3.0 * report.standard_error);
    let deviation = (report.empirical_average - analytic_age).abs();
    checks.push(Check {
        name: "update-sim",
        passed: deviation <= tolerance,
        detail: format!(
            "empirical age {:.6} vs analytic {analytic_age:.6}, |diff| {deviation:.3e} (tolerance {tolerance:.3e})",
            report.empirical_average
        ),
    });
    let residuals = renewal_identities(
        &report,
        &p,
        &assignment.integer_lengths()?,
        scheme.as_ref(),
        spec.epsilon,
    )?;
    checks.push(Check {
        name: "renewal",
        passed: residuals.max_abs() < RESIDUAL_SIGMAS,
        detail: format!(
            "residuals Y {:+.2}σ, Y² {:+.2}σ, Z {:+.2}σ, R {:+.2}σ (limit {RESIDUAL_SIGMAS}σ)",
            residuals.residual_y, residuals.residual_y_sq, residuals.residual_z, residuals.residual_r
        ),
    });

    if spec.mode == Mode::Delay {
        let rate = spec.require_lambda()?;
        let analytic = average_delay(&p, &assignment, rate)?;
        let queue = simulate_mg1(&p, &book, rate, horizon, spec.seed)?;
        let tolerance = (0.02 * analytic).max(3.0 * queue.standard_error);
        let deviation = (queue.empirical_average - analytic).abs();
        checks.push(Check {
            name: "queue-sim",
            passed: deviation <= tolerance,
            detail: format!(
                "empirical delay {:.6} vs analytic {analytic:.6}, |diff| {deviation:.3e} (tolerance {tolerance:.3e})",
                queue.empirical_average
            ),
        });
    }

    let mut all_passed = true;
    for check in &checks {
        println!(
            "{} {}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
        all_passed &= check.passed;
    }
    if all_passed {
        println!("all {} checks passed", checks.len());
    } else {
        let failed = checks.iter().filter(|c| !c.passed).count();
        println!("{failed} of {} checks failed", checks.len());
    }
    Ok(all_passed)
}
