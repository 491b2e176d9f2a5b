//! The `sweep` command: evaluate a parameter grid and emit a plot-ready
//! table, one row per grid point.
//!
//! Age mode sweeps the Zipf exponent `s` for a fixed alphabet size; delay
//! mode sweeps the arrival rate `λ` for a fixed distribution. Grid points
//! run concurrently, rows appear in grid order, and per-point failures
//! become rows with an error status instead of killing the sweep. The mean
//! lengths reported are those of the rounded integer codes.

use std::path::Path;

use agecodec::age::{average_age, average_delay};
use agecodec::codec::{moments, shannon_lengths};
use agecodec::pmf::Pmf;
use agecodec::solver::{solve_age, solve_delay};
use agecodec::varform::Mode;
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;

use crate::input::{DistSpec, RunSpec};
use crate::output::{cell, write_text};
use crate::OutputFormat;

#[derive(Debug, Default)]
struct Row {
    param: f64,
    h: Option<f64>,
    proposed_real: Option<f64>,
    proposed_int: Option<f64>,
    shannon_real: Option<f64>,
    shannon_int: Option<f64>,
    el_proposed: Option<f64>,
    el_shannon: Option<f64>,
    kl: Option<f64>,
    status: String,
}

impl Row {
    fn failed(param: f64, err: &anyhow::Error) -> Self {
        Self {
            param,
            status: format!("error: {err:#}").replace(',', ";").replace('\n', " "),
            ..Self::default()
        }
    }
}

pub fn run(
    spec: &RunSpec,
    grid: &[f64],
    jobs: Option<usize>,
    format: OutputFormat,
    out: Option<&Path>,
) -> Result<()> {
    if grid.is_empty() {
        bail!("the sweep grid is empty");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("building the sweep thread pool")?;
    let rows: Vec<Row> = match spec.mode {
        Mode::Age => {
            let DistSpec::Zipf { n, .. } = &spec.dist else {
                bail!("age-mode sweeps vary the Zipf exponent; use --dist zipf:n=SIZE");
            };
            let n = *n;
            pool.install(|| grid.par_iter().map(|&s| age_row(s, n, spec)).collect())
        }
        Mode::Delay => {
            let p = spec.pmf()?;
            pool.install(|| grid.par_iter().map(|&rate| delay_row(rate, &p, spec)).collect())
        }
    };
    let text = match format {
        OutputFormat::Csv => csv_text(spec, &rows),
        OutputFormat::Json => json_text(spec, &rows)?,
    };
    write_text(out, &text)
}

fn age_row(s: f64, n: usize, spec: &RunSpec) -> Row {
    let filled = (|| -> Result<Row> {
        let p = Pmf::zipf(s, n)?;
        let result = solve_age(&p, &spec.solver)?;
        let design = result.integer_design(&p)?;
        let sh_real = shannon_lengths(&p, false);
        let sh_int = shannon_lengths(&p, true);
        Ok(Row {
            param: s,
            h: Some(p.entropy()),
            proposed_real: Some(result.average_age()),
            proposed_int: Some(average_age(&p, &design.lengths)?),
            shannon_real: Some(average_age(&p, &sh_real)?),
            shannon_int: Some(average_age(&p, &sh_int)?),
            el_proposed: Some(moments(&p, &design.lengths)?.0),
            el_shannon: Some(moments(&p, &sh_int)?.0),
            kl: Some(p.kl_divergence(&result.p_star)?),
            status: "ok".into(),
        })
    })();
    log::debug!("swept s = {s}");
    filled.unwrap_or_else(|err| Row::failed(s, &err))
}

fn delay_row(rate: f64, p: &Pmf, spec: &RunSpec) -> Row {
    let filled = (|| -> Result<Row> {
        let result = solve_delay(p, rate, &spec.solver)?;
        let design = result.integer_design(p)?;
        let sh_real = shannon_lengths(p, false);
        let sh_int = shannon_lengths(p, true);
        Ok(Row {
            param: rate,
            h: Some(p.entropy()),
            proposed_real: Some(result.cost),
            proposed_int: Some(average_delay(p, &design.lengths, rate)?),
            shannon_real: Some(average_delay(p, &sh_real, rate)?),
            shannon_int: Some(average_delay(p, &sh_int, rate)?),
            el_proposed: Some(moments(p, &design.lengths)?.0),
            el_shannon: Some(moments(p, &sh_int)?.0),
            kl: Some(p.kl_divergence(&result.p_star)?),
            status: "ok".into(),
        })
    })();
    log::debug!("swept lambda = {rate}");
    filled.unwrap_or_else(|err| Row::failed(rate, &err))
}

fn columns(mode: Mode) -> (&'static str, &'static str) {
    match mode {
        Mode::Age => ("s", "age"),
        Mode::Delay => ("lambda", "delay"),
    }
}

fn csv_text(spec: &RunSpec, rows: &[Row]) -> String {
    let (param, prefix) = columns(spec.mode);
    let mut out = format!("# seed: {}\n", spec.seed);
    out.push_str(&format!(
        "{param},H,{prefix}_proposed_real,{prefix}_proposed_int,{prefix}_shannon_real,\
         {prefix}_shannon_int,E[L]_proposed,E[L]_shannon,KL(P||P*),status\n"
    ));
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.param,
            cell(row.h),
            cell(row.proposed_real),
            cell(row.proposed_int),
            cell(row.shannon_real),
            cell(row.shannon_int),
            cell(row.el_proposed),
            cell(row.el_shannon),
            cell(row.kl),
            row.status
        ));
    }
    out
}

fn json_text(spec: &RunSpec, rows: &[Row]) -> Result<String> {
    let (param, prefix) = columns(spec.mode);
    let rows: Vec<serde_json::Value> = rows
        .iter()
        .map(|row| {
            let mut obj = serde_json::Map::new();
            obj.insert(param.into(), json!(row.param));
            obj.insert("H".into(), json!(row.h));
            obj.insert(format!("{prefix}_proposed_real"), json!(row.proposed_real));
            obj.insert(format!("{prefix}_proposed_int"), json!(row.proposed_int));
            obj.insert(format!("{prefix}_shannon_real"), json!(row.shannon_real));
            obj.insert(format!("{prefix}_shannon_int"), json!(row.shannon_int));
            obj.insert("E[L]_proposed".into(), json!(row.el_proposed));
            obj.insert("E[L]_shannon".into(), json!(row.el_shannon));
            obj.insert("KL(P||P*)".into(), json!(row.kl));
            obj.insert("status".into(), json!(row.status));
            serde_json::Value::Object(obj)
        })
        .collect();
    let doc = json!({ "seed": spec.seed, "rows": rows });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}
