//! The `design` command: solve one instance and write the result files.
//!
//! Produces, inside the output directory: `design.json` (solution plus
//! diagnostics), `codebook.json` (canonical integer code), and a one-row
//! `summary.csv` placing the optimized cost next to the Shannon baseline.
//! The bound columns hold the analytic age bounds in age mode and the
//! certified dual value / integer-Shannon cost in delay mode. The summary is
//! echoed to stdout.

use std::fs;
use std::path::Path;

use agecodec::age::{age_bounds, average_age, average_delay};
use agecodec::codec::{shannon_lengths, LengthAssignment};
use agecodec::pmf::Pmf;
use agecodec::solver::OptResult;
use agecodec::varform::Mode;
use anyhow::{Context, Result};

use crate::input::RunSpec;
use crate::output::stamp_seed;

pub fn run(spec: &RunSpec, out_dir: &Path) -> Result<()> {
    let p = spec.pmf()?;
    let result = spec.solve(&p)?;
    let integer = result.integer_design(&p)?;

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let design_path = out_dir.join("design.json");
    fs::write(&design_path, stamp_seed(&result.to_json(), spec.seed)?)
        .with_context(|| format!("writing {}", design_path.display()))?;
    let book_path = out_dir.join("codebook.json");
    fs::write(&book_path, integer.book.to_json() + "\n")
        .with_context(|| format!("writing {}", book_path.display()))?;
    let summary = summary_csv(spec, &p, &result, integer.cost)?;
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, &summary)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    log::info!(
        "wrote {}, {} and {}",
        design_path.display(),
        book_path.display(),
        summary_path.display()
    );
    print!("{summary}");
    Ok(())
}

/// Cost of a code under the given objective: `E[L] + E[L²]/(2 E[L])` for the
/// age, the mean M/G/1 sojourn time for the delay.
pub fn cost_of(p: &Pmf, l: &LengthAssignment, mode: Mode, lambda: Option<f64>) -> Result<f64> {
    match mode {
        Mode::Age => Ok(average_age(p, l)? + 0.5),
        Mode::Delay => {
            let rate = lambda.context("delay cost needs an arrival rate")?;
            Ok(average_delay(p, l, rate)?)
        }
    }
}

fn summary_csv(spec: &RunSpec, p: &Pmf, result: &OptResult, cost_rounded: f64) -> Result<String> {
    let shannon_real = cost_of(p, &shannon_lengths(p, false), spec.mode, spec.lambda)?;
    let shannon_int = cost_of(p, &shannon_lengths(p, true), spec.mode, spec.lambda)?;
    let (bound_lower, bound_upper) = match spec.mode {
        Mode::Age => age_bounds(p),
        Mode::Delay => (result.cost - result.duality_gap, shannon_int),
    };
    let mut out = format!("# seed: {}\n", spec.seed);
    out.push_str(
        "h,cost_real,average,cost_rounded,cost_shannon_real,cost_shannon_int,bound_lower,bound_upper\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{}\n",
        p.entropy(),
        result.cost,
        result.average_age_or_delay(),
        cost_rounded,
        shannon_real,
        shannon_int,
        bound_lower,
        bound_upper
    ));
    Ok(out)
}
