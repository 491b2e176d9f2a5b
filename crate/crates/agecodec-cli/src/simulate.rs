//! The `simulate` command: build (or take) an integer code and run it
//! through the discrete-event simulator.
//!
//! The report JSON carries the seed, the simulated code, the analytic
//! average for the same configuration, and the full empirical report. A
//! per-cycle trace CSV can be written alongside for update-scheme runs.

use std::fs;
use std::path::Path;

use agecodec::age::{average_age, average_age_erasure, average_age_randomized, average_delay};
use agecodec::codec::{canonical_code, LengthAssignment};
use agecodec::sim::{simulate_mg1, simulate_update, SimConfig};
use agecodec::varform::Mode;
use anyhow::{ensure, Context, Result};
use serde_json::json;

use crate::input::RunSpec;
use crate::output::write_text;

pub fn run(
    spec: &RunSpec,
    horizon: u64,
    lengths: Option<&LengthAssignment>,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let p = spec.pmf()?;
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
        None => spec.solve(&p)?.integer_design(&p)?.lengths,
    };
    let book = canonical_code(&assignment)?;

    let (analytic, report) = match spec.mode {
        Mode::Age => {
            let scheme = spec.scheme(&assignment)?;
            let base = match &scheme {
                Some(scheme) => average_age_randomized(&p, &assignment, scheme)?,
                None => average_age(&p, &assignment)?,
            };
            let analytic = if spec.epsilon > 0.0 {
                average_age_erasure(base, spec.epsilon)?
            } else {
                base
            };
            let cfg = SimConfig {
                horizon,
                seed: spec.seed,
                epsilon: spec.epsilon,
                scheme,
                lambda: None,
                record_trace: trace.is_some(),
            };
            (analytic, simulate_update(&p, &book, &cfg)?)
        }
        Mode::Delay => {
            let rate = spec.require_lambda()?;
            let analytic = average_delay(&p, &assignment, rate)?;
            (analytic, simulate_mg1(&p, &book, rate, horizon, spec.seed)?)
        }
    };

    if let Some(path) = trace {
        match report.trace_csv() {
            Some(csv) => fs::write(path, format!("# seed: {}\n{csv}", spec.seed))
                .with_context(|| format!("writing {}", path.display()))?,
            None => log::warn!("per-cycle traces are only recorded by the update-scheme simulator"),
        }
    }

    let doc = json!({
        "seed": spec.seed,
        "mode": spec.mode,
        "lengths": assignment.integer_lengths()?,
        "analytic": analytic,
        "report": report,
    });
    write_text(out, &(serde_json::to_string_pretty(&doc)? + "\n"))
}
