//! Parsing of command-line value specs (distributions, schemes, grids,
//! config files) and their resolution into a runnable spec.
//!
//! Every setting resolves in the same order: explicit flag, then config-file
//! entry, then built-in default.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use agecodec::age::RandomizedScheme;
use agecodec::codec::LengthAssignment;
use agecodec::pmf::Pmf;
use agecodec::solver::{solve_age, solve_delay, OptResult, SolverOptions};
use agecodec::varform::Mode;
use anyhow::{anyhow, bail, Context, Result};

use crate::{CommonArgs, OutputFormat};

/// Distribution source named on the command line or in a config file.
#[derive(Debug, Clone)]
pub enum DistSpec {
    /// `zipf:s=1,n=256`; the exponent may be left out when a sweep grid
    /// supplies it.
    Zipf { s: Option<f64>, n: usize },
    /// `file:PATH` holding a JSON probability array or a one-column CSV with
    /// header `p`.
    File(PathBuf),
    /// `inline:0.5,0.25,0.25`; weights are normalized to sum one.
    Inline(Vec<f64>),
}

impl DistSpec {
    /// Parses a `kind:args` distribution spec.
    pub fn parse(text: &str) -> Result<Self> {
        let (kind, rest) = text.split_once(':').with_context(|| {
            format!("distribution spec '{text}' needs the form kind:args, e.g. zipf:s=1,n=256")
        })?;
        match kind.trim() {
            "zipf" => {
                let mut s = None;
                let mut n = None;
                for part in rest.split(',') {
                    let (key, value) = part.split_once('=').with_context(|| {
                        format!("zipf parameter '{part}' needs the form key=value")
                    })?;
                    match key.trim() {
                        "s" => {
                            s = Some(value.trim().parse::<f64>().with_context(|| {
                                format!("bad zipf exponent '{}'", value.trim())
                            })?)
                        }
                        "n" => {
                            n = Some(value.trim().parse::<usize>().with_context(|| {
                                format!("bad zipf alphabet size '{}'", value.trim())
                            })?)
                        }
                        other => bail!("unknown zipf parameter '{other}' (expected s or n)"),
                    }
                }
                Ok(Self::Zipf {
                    s,
                    n: n.context("zipf spec needs n=SIZE")?,
                })
            }
            "file" => Ok(Self::File(PathBuf::from(rest.trim()))),
            "inline" => {
                let weights = rest
                    .split(',')
                    .map(|w| w.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(|| format!("inline weights '{rest}' must be numbers"))?;
                Ok(Self::Inline(weights))
            }
            other => bail!("unknown distribution kind '{other}' (expected zipf, file, or inline)"),
        }
    }

    /// Materializes the pmf; errors when a zipf spec still lacks its
    /// exponent.
    pub fn realize(&self) -> Result<Pmf> {
        match self {
            Self::Zipf { s, n } => {
                let s = s.context("zipf spec needs s=EXPONENT (sweeps take it from the grid)")?;
                Ok(Pmf::zipf(s, *n)?)
            }
            Self::File(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading distribution file {}", path.display()))?;
                let pmf = if text.trim_start().starts_with('[') {
                    Pmf::from_json(&text)
                } else {
                    Pmf::from_csv(&text)
                };
                pmf.with_context(|| format!("parsing distribution file {}", path.display()))
            }
            Self::Inline(weights) => Ok(Pmf::new(weights)?),
        }
    }
}

/// Parses an `inline:…` / `file:…` numeric list (transmit probabilities,
/// codeword lengths). Files hold either a JSON array or whitespace-separated
/// numbers.
pub fn parse_value_list(spec: &str, what: &str) -> Result<Vec<f64>> {
    let (kind, rest) = spec.split_once(':').with_context(|| {
        format!("{what} spec '{spec}' needs the form inline:v1,v2,… or file:PATH")
    })?;
    match kind.trim() {
        "inline" => rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("inline {what} values '{rest}' must be numbers")),
        "file" => {
            let path = rest.trim();
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {what} file {path}"))?;
            if text.trim_start().starts_with('[') {
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing {what} file {path} as a JSON array"))
            } else {
                text.split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(|| format!("parsing {what} file {path} as numbers"))
            }
        }
        other => bail!("unknown {what} source '{other}' (expected inline or file)"),
    }
}

/// Parses an explicit integer length assignment.
pub fn parse_lengths(spec: &str) -> Result<LengthAssignment> {
    let values = parse_value_list(spec, "lengths")?;
    let assignment = LengthAssignment::from_reals(values)?;
    if !assignment.is_integral() {
        bail!("explicit codeword lengths must be whole bit counts");
    }
    Ok(assignment)
}

/// Parses a sweep grid: inclusive `START:STOP:STEP` or a single value.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts = text
        .split(':')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("grid '{text}' must be numeric START:STOP:STEP"))?;
    match parts[..] {
        [value] => Ok(vec![value]),
        [start, stop, step] => {
            if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
                bail!("grid endpoints and step must be finite");
            }
            if stop == start {
                return Ok(vec![start]);
            }
            if step <= 0.0 || stop < start {
                bail!("grid needs STEP > 0 and STOP >= START");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + step * i as f64).collect())
        }
        _ => bail!("grid '{text}' must be START:STOP:STEP or a single value"),
    }
}

/// Mode name as it appears in a config file.
pub fn parse_mode(text: &str) -> Result<Mode> {
    match text.trim().to_ascii_lowercase().as_str() {
        "age" => Ok(Mode::Age),
        "delay" => Ok(Mode::Delay),
        other => bail!("unknown mode '{other}' (expected age or delay)"),
    }
}

/// Format name as it appears in a config file.
pub fn parse_format(text: &str) -> Result<OutputFormat> {
    match text.trim().to_ascii_lowercase().as_str() {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => bail!("unknown format '{other}' (expected csv or json)"),
    }
}

/// Flat `key = value` config file; `#` starts a comment and keys are
/// case-insensitive with `-` and `_` interchangeable.
#[derive(Debug, Default)]
pub struct ConfigMap(HashMap<String, String>);

impl ConfigMap {
    /// Loads the file, or returns an empty map when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut map = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').with_context(|| {
                format!("config line {}: expected key=value, got '{line}'", lineno + 1)
            })?;
            map.insert(normalize_key(key), value.trim().to_string());
        }
        Ok(Self(map))
    }

    /// Raw value of a key, if present.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(&normalize_key(key)).map(String::as_str)
    }

    /// Parsed value of a key, if present.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|err| anyhow!("config key '{key}': {err}"))
            })
            .transpose()
    }
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Flag value if set, else the config entry under `key`.
pub fn pick<T: FromStr>(flag: Option<T>, cfg: &ConfigMap, key: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    match flag {
        Some(value) => Ok(Some(value)),
        None => cfg.parse(key),
    }
}

/// Fully resolved inputs of one command run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub dist: DistSpec,
    pub mode: Mode,
    pub lambda: Option<f64>,
    pub epsilon: f64,
    pub theta: Option<Vec<f64>>,
    pub skip_length: Option<f64>,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl RunSpec {
    /// Merges flags over config entries over defaults and validates the
    /// combination.
    pub fn resolve(args: &CommonArgs, cfg: &ConfigMap) -> Result<Self> {
        let dist_text = args
            .dist
            .clone()
            .or_else(|| cfg.get("dist").map(str::to_string))
            .context("a source distribution is required: pass --dist or set `dist` in the config file")?;
        let dist = DistSpec::parse(&dist_text)?;
        let mode = match args.mode {
            Some(mode) => mode.into(),
            None => cfg
                .get("mode")
                .map(parse_mode)
                .transpose()?
                .unwrap_or(Mode::Age),
        };
        let lambda = pick(args.lambda, cfg, "lambda")?;
        let epsilon = pick(args.epsilon, cfg, "epsilon")?.unwrap_or(0.0);
        if !epsilon.is_finite() || !(0.0..1.0).contains(&epsilon) {
            bail!("erasure probability {epsilon} must lie in [0, 1)");
        }
        let theta = args
            .theta
            .clone()
            .or_else(|| cfg.get("theta").map(str::to_string))
            .map(|spec| parse_value_list(&spec, "theta"))
            .transpose()?;
        let skip_length = pick(args.skip_length, cfg, "skip_length")?;
        let seed = pick(args.seed, cfg, "seed")?.unwrap_or(0);
        let defaults = SolverOptions::default();
        let solver = SolverOptions {
            seed,
            multistarts: pick(args.multistarts, cfg, "multistarts")?
                .unwrap_or(defaults.multistarts),
            z_grid_points: pick(args.grid_points, cfg, "grid_points")?
                .unwrap_or(defaults.z_grid_points),
            ..defaults
        };
        Ok(Self {
            dist,
            mode,
            lambda,
            epsilon,
            theta,
            skip_length,
            seed,
            solver,
        })
    }

    /// Materializes the source distribution.
    pub fn pmf(&self) -> Result<Pmf> {
        self.dist.realize()
    }

    /// The arrival rate, which delay-mode commands cannot run without.
    pub fn require_lambda(&self) -> Result<f64> {
        self.lambda.context(
            "delay mode requires an arrival rate: pass --lambda or set `lambda` in the config file",
        )
    }

    /// Runs the solver for the resolved mode.
    pub fn solve(&self, p: &Pmf) -> Result<OptResult> {
        match self.mode {
            Mode::Age => Ok(solve_age(p, &self.solver)?),
            Mode::Delay => Ok(solve_delay(p, self.require_lambda()?, &self.solver)?),
        }
    }

    /// Builds the randomized transmit scheme when `--theta` was given; the
    /// skip length defaults to the shortest codeword.
    pub fn scheme(&self, lengths: &LengthAssignment) -> Result<Option<RandomizedScheme>> {
        let Some(theta) = &self.theta else {
            return Ok(None);
        };
        let scheme = match self.skip_length {
            Some(skip) => RandomizedScheme::new(theta.clone(), skip)?,
            None => RandomizedScheme::with_default_skip(theta.clone(), lengths)?,
        };
        Ok(Some(scheme))
    }
}
