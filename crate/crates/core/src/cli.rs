//! Command-line front end: CSV ingestion, subcommand dispatch and JSON reports.
//!
//! Every report echoes the fully resolved configuration. Passing a report (or
//! just its `config` object) back through `--config` reruns the same command
//! and reproduces the report byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::asymptotics::{avar_matrix, regularity_diagnostics, sigma2_estimate, trace_amse, AmseTarget};
use crate::bench::{
    dataset_fingerprint, default_r_grid, generate_synthetic, run_emse_with, BenchConfig, DesignFamily,
    SyntheticSpec, DEFAULT_REPS, DEFAULT_SEED,
};
use crate::error::Error;
use crate::lsq::{ols_fit, weighted_ls_fit, Dataset};
use crate::method::Method;
use crate::optdesign::{criterion_value, exchange_improve, greedy_select, iboss_balanced, Criterion};
use crate::probs::{compute_probabilities, Scheme};
use crate::rng::stream;
use crate::sampler::{subsample_estimate, EstimateMode, RowSampler};
use crate::volume::{VolumeSampler, VolumeVariant};

pub const SCHEMA_VERSION: u32 = 1;
const DEFAULT_BENCH_N: usize = 1000;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Malformed(String),
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("non-numeric value '{value}' at line {line}, column '{column}'")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("non-finite value '{value}' at line {line}, column '{column}'")]
    NonFinite {
        line: u64,
        column: String,
        value: String,
    },
    #[error("log of nonpositive value {value} at line {line}, column '{column}'")]
    NonPositiveLog { line: u64, column: String, value: f64 },
    #[error("{0}")]
    Empty(String),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 2 for numerical failures, 1 for anything wrong with the input or invocation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Which columns to read and how to preprocess them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Header name or zero-based index. Defaults to the last column.
    pub response: Option<String>,
    /// Header names or zero-based indices. Defaults to every column but the response.
    pub predictors: Option<Vec<String>>,
    #[serde(default)]
    pub log_columns: Vec<String>,
    #[serde(default)]
    pub drop_head_rows: usize,
}

fn resolve_column(header: &csv::StringRecord, key: &str) -> Result<usize, CsvError> {
    if let Some(i) = header.iter().position(|h| h == key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(i) if i < header.len() => Ok(i),
        _ => Err(CsvError::MissingColumn(key.to_string())),
    }
}

/// Reads a comma-separated file with a header row. Drops the first
/// `drop_head_rows` data rows, takes natural logs of `log_columns`, then
/// selects the response and predictor columns.
pub fn parse_csv(path: &Path, options: &CsvOptions) -> Result<Dataset, CsvError> {
    let file = fs::File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| CsvError::Malformed(e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(CsvError::Empty("header row is empty".into()));
    }

    let response = match &options.response {
        Some(key) => resolve_column(&header, key)?,
        None => header.len() - 1,
    };
    let predictors: Vec<usize> = match &options.predictors {
        Some(keys) => keys
            .iter()
            .map(|k| resolve_column(&header, k))
            .collect::<Result<_, _>>()?,
        None => (0..header.len()).filter(|&j| j != response).collect(),
    };
    if predictors.is_empty() {
        return Err(CsvError::Empty("no predictor columns selected".into()));
    }
    let logged: Vec<usize> = options
        .log_columns
        .iter()
        .map(|k| resolve_column(&header, k))
        .collect::<Result<_, _>>()?;

    let mut needed: Vec<usize> = predictors.iter().chain(&logged).copied().collect();
    needed.push(response);
    needed.sort_unstable();
    needed.dedup();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CsvError::Malformed(e.to_string()))?;
        if k < options.drop_head_rows {
            continue;
        }
        let line = record.position().map_or(k as u64 + 2, |p| p.line());
        let mut values = vec![f64::NAN; header.len()];
        for &j in &needed {
            let cell = record.get(j).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| CsvError::NonNumeric {
                line,
                column: header[j].to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(CsvError::NonFinite {
                    line,
                    column: header[j].to_string(),
                    value: cell.to_string(),
                });
            }
            values[j] = v;
        }
        for &j in &logged {
            let v = values[j];
            if v <= 0.0 {
                return Err(CsvError::NonPositiveLog {
                    line,
                    column: header[j].to_string(),
                    value: v,
                });
            }
            values[j] = v.ln();
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(CsvError::Empty("no data rows left to read".into()));
    }

    let n = rows.len();
    let x = DMatrix::from_fn(n, predictors.len(), |i, j| rows[i][predictors[j]]);
    let y = DVector::from_fn(n, |i, _| rows[i][response]);
    Dataset::new(x, y).map_err(|e| CsvError::Malformed(e.to_string()))
}

/// Writes `data` as CSV with columns `names` for the design followed by `y`.
pub fn write_csv(path: &Path, data: &Dataset, names: &[String]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push("y");
    w.write_record(&header).map_err(io)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.design().row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.response()[i].to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "subsample", version, about = "Subsampling estimators for large least-squares problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Least squares on the full dataset.
    Fit(Flags),
    /// Sampling probabilities of one scheme.
    Probs(Flags),
    /// One seeded subsample and its estimate.
    Subsample(Flags),
    /// Deterministic or volume-sampled subset and the fit on it.
    Select(Flags),
    /// Asymptotic variance and trace AMSE of a sampling scheme.
    Amse(Flags),
    /// Empirical MSE over bootstrap replicates.
    Bench(Flags),
    /// Synthetic data written to CSV.
    Simulate(Flags),
}

impl Command {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Command::Fit(f) => ("fit", f),
            Command::Probs(f) => ("probs", f),
            Command::Subsample(f) => ("subsample", f),
            Command::Select(f) => ("select", f),
            Command::Amse(f) => ("amse", f),
            Command::Bench(f) => ("bench", f),
            Command::Simulate(f) => ("simulate", f),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: Option<String>,
    /// Response column, by name or zero-based index (default: last column).
    #[arg(long)]
    pub response: Option<String>,
    /// Predictor columns, comma separated (default: all but the response).
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    /// Columns to log-transform before selection.
    #[arg(long, value_delimiter = ',')]
    pub log_columns: Option<Vec<String>>,
    /// Data rows to skip at the top of the file.
    #[arg(long)]
    pub drop_head_rows: Option<usize>,
    /// Prepend a column of ones to the design.
    #[arg(long)]
    pub intercept: bool,
    /// Sampling scheme: rand, blev, slev, ic, rl or pl.
    #[arg(long)]
    pub scheme: Option<String>,
    /// SLEV shrinkage towards uniform.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Method(s), comma separated, e.g. rand,blev,slev:0.9,iboss,greedy:d.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<String>>,
    /// Subsample size(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<usize>>,
    /// Bootstrap replicates for bench (default: 100).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed (default: 20240601).
    #[arg(long)]
    pub seed: Option<u64>,
    /// plain or weighted (subsample only).
    #[arg(long)]
    pub mode: Option<String>,
    /// Noise variance for amse (default: residual estimate).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Record wall-clock timings; makes the report machine dependent.
    #[arg(long)]
    pub timing: bool,
    /// Aligned text table instead of JSON (bench only).
    #[arg(long)]
    pub table: bool,
    /// Worker threads for bench (default: all cores). Never changes results.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Rerun with the config echoed in an earlier report.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Synthetic design family: gaussian, t or student-line.
    #[arg(long)]
    pub family: Option<String>,
    /// Rows of synthetic data.
    #[arg(long)]
    pub n: Option<usize>,
    /// Columns of synthetic data.
    #[arg(long)]
    pub p: Option<usize>,
    /// Degrees of freedom for the t family.
    #[arg(long)]
    pub df: Option<f64>,
    /// Noise standard deviation of synthetic data (default: 1).
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// True coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// Where simulate writes its CSV.
    #[arg(long)]
    pub data_out: Option<String>,
}

/// Resolved configuration, echoed in every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub csv: Option<CsvOptions>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub intercept: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scheme: Option<Scheme>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub methods: Option<Vec<Method>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mode: Option<EstimateMode>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub table: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub data_out: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub results: Value,
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

/// Loads `--config`: either a full report or a bare config object.
fn load_config(path: &Path, command: &str) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: not JSON: {e}", path.display())))?;
    let config = match value.get("config") {
        Some(c) => {
            if let Some(cmd) = value.get("command").and_then(Value::as_str) {
                if cmd != command {
                    return Err(usage(format!(
                        "{} holds a '{cmd}' config, not '{command}'",
                        path.display()
                    )));
                }
            }
            c.clone()
        }
        None => value,
    };
    serde_json::from_value(config).map_err(|e| usage(format!("{}: bad config: {e}", path.display())))
}

fn parse_methods(labels: &[String]) -> Result<Vec<Method>, CliError> {
    labels
        .iter()
        .map(|s| s.parse::<Method>().map_err(CliError::from))
        .collect()
}

/// Merges flags over a base config and fills every default the command uses.
pub fn resolve(command: &str, flags: &Flags, base: RunConfig) -> Result<RunConfig, CliError> {
    let mut c = base;
    if flags.input.is_some() {
        c.input = flags.input.clone();
    }
    let any_csv = flags.response.is_some()
        || flags.predictors.is_some()
        || flags.log_columns.is_some()
        || flags.drop_head_rows.is_some();
    if any_csv {
        let mut o = c.csv.take().unwrap_or_default();
        if flags.response.is_some() {
            o.response = flags.response.clone();
        }
        if flags.predictors.is_some() {
            o.predictors = flags.predictors.clone();
        }
        if let Some(l) = &flags.log_columns {
            o.log_columns = l.clone();
        }
        if let Some(d) = flags.drop_head_rows {
            o.drop_head_rows = d;
        }
        c.csv = Some(o);
    }
    if flags.intercept {
        c.intercept = Some(true);
    }
    if let Some(s) = &flags.scheme {
        c.scheme = Some(s.parse()?);
    }
    if flags.alpha.is_some() {
        c.alpha = flags.alpha;
    }
    if let Some(m) = &flags.method {
        c.methods = Some(parse_methods(m)?);
    }
    if flags.r.is_some() {
        c.r = flags.r.clone();
    }
    if flags.reps.is_some() {
        c.reps = flags.reps;
    }
    if flags.seed.is_some() {
        c.seed = flags.seed;
    }
    if let Some(m) = &flags.mode {
        c.mode = Some(m.parse()?);
    }
    if flags.sigma2.is_some() {
        c.sigma2 = flags.sigma2;
    }
    if flags.timing {
        c.timing = Some(true);
    }
    if flags.table {
        c.table = Some(true);
    }
    if flags.data_out.is_some() {
        c.data_out = flags.data_out.clone();
    }
    let synthetic_flags = flags.family.is_some()
        || flags.n.is_some()
        || flags.p.is_some()
        || flags.df.is_some()
        || flags.noise_sd.is_some()
        || flags.beta.is_some();
    if synthetic_flags {
        c.synthetic = Some(synthetic_from_flags(flags, c.synthetic.take())?);
    }

    let uses_data = command != "simulate";
    if uses_data {
        if c.input.is_some() {
            c.synthetic = None;
            c.csv = Some(c.csv.take().unwrap_or_default());
            c.intercept = Some(c.intercept.unwrap_or(false));
        } else if command == "bench" {
            c.synthetic = Some(c.synthetic.take().unwrap_or_else(|| SyntheticSpec::student_line(DEFAULT_BENCH_N)));
            c.csv = None;
            c.intercept = None;
        } else {
            return Err(usage(format!("{command} needs --input")));
        }
    } else {
        c.input = None;
        c.csv = None;
        c.intercept = None;
        c.synthetic = Some(c.synthetic.take().unwrap_or_else(|| SyntheticSpec::student_line(DEFAULT_BENCH_N)));
        if c.data_out.is_none() {
            return Err(usage("simulate needs --data-out"));
        }
    }

    let wants = |cmds: &[&str]| cmds.contains(&command);
    if wants(&["probs", "subsample", "amse"]) {
        let scheme = c.scheme.unwrap_or(Scheme::Blev);
        c.scheme = Some(scheme);
        if scheme == Scheme::Slev {
            c.alpha = Some(c.alpha.unwrap_or(crate::probs::DEFAULT_SLEV_ALPHA));
        }
    } else {
        c.scheme = None;
        if c.alpha.is_some() {
            return Err(usage(format!("--alpha is not used by {command}; use --method slev:<alpha>")));
        }
    }
    if !wants(&["select", "bench"]) {
        c.methods = None;
    }
    if !wants(&["subsample", "select", "amse", "bench"]) {
        c.r = None;
    }
    if !wants(&["bench"]) {
        c.reps = None;
        c.timing = None;
        c.table = None;
    }
    if !wants(&["subsample", "select", "bench", "simulate"]) {
        c.seed = None;
    } else {
        c.seed = Some(c.seed.unwrap_or(DEFAULT_SEED));
    }
    if wants(&["subsample"]) {
        c.mode = Some(c.mode.unwrap_or(EstimateMode::Weighted));
    } else {
        c.mode = None;
    }
    if !wants(&["amse"]) {
        c.sigma2 = None;
    }
    if !wants(&["simulate"]) {
        c.data_out = None;
    }

    match command {
        "subsample" | "select" | "amse" => match c.r.as_deref() {
            Some([_]) => {}
            Some(_) => return Err(usage(format!("{command} takes exactly one --r"))),
            None => return Err(usage(format!("{command} needs --r"))),
        },
        _ => {}
    }
    if command == "select" {
        match c.methods.as_deref() {
            Some([_]) => {}
            Some(_) => return Err(usage("select takes exactly one --method")),
            None => c.methods = Some(vec![Method::Iboss]),
        }
    }
    if command == "bench" {
        c.methods = Some(c.methods.take().unwrap_or_else(Method::default_benchmark_set));
        c.reps = Some(c.reps.unwrap_or(DEFAULT_REPS));
        c.timing = Some(c.timing.unwrap_or(false));
        c.table = Some(c.table.unwrap_or(false));
    }
    Ok(c)
}

fn synthetic_from_flags(flags: &Flags, base: Option<SyntheticSpec>) -> Result<SyntheticSpec, CliError> {
    let family = match flags.family.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None => base.as_ref().map_or(DesignFamily::StudentLine, |s| s.family),
        Some("student-line") => DesignFamily::StudentLine,
        Some("gaussian") | Some("normal") => DesignFamily::Gaussian,
        Some("t") | Some("student-t") | Some("student_t") => DesignFamily::StudentT {
            df: flags.df.unwrap_or(5.0),
        },
        Some(other) => return Err(usage(format!("unknown design family '{other}'"))),
    };
    let family = match (family, flags.df) {
        (DesignFamily::StudentT { .. }, Some(df)) => DesignFamily::StudentT { df },
        (_, Some(_)) if !matches!(family, DesignFamily::StudentT { .. }) => {
            return Err(usage("--df only applies to the t family"))
        }
        (f, _) => f,
    };
    let p = match family {
        DesignFamily::StudentLine => flags.p.unwrap_or(2),
        _ => flags.p.or(base.as_ref().map(|s| s.p)).unwrap_or(2),
    };
    let n = flags.n.or(base.as_ref().map(|s| s.n)).unwrap_or(DEFAULT_BENCH_N);
    let beta0 = match &flags.beta {
        Some(b) => b.clone(),
        None => match &base {
            Some(s) if s.p == p => s.beta0.clone(),
            _ => vec![1.0; p],
        },
    };
    let noise_sd = flags.noise_sd.or(base.as_ref().map(|s| s.noise_sd)).unwrap_or(1.0);
    let spec = SyntheticSpec {
        n,
        p,
        family,
        beta0,
        noise_sd,
    };
    spec.validate()?;
    Ok(spec)
}

fn load_data(c: &RunConfig, seed: u64) -> Result<Dataset, CliError> {
    if let Some(path) = &c.input {
        let data = parse_csv(Path::new(path), c.csv.as_ref().expect("resolved csv options"))?;
        return Ok(if c.intercept == Some(true) {
            data.with_intercept()
        } else {
            data
        });
    }
    let spec = c.synthetic.as_ref().expect("resolved synthetic spec");
    Ok(generate_synthetic(spec, seed)?)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable result")
}

/// Runs one resolved command. Returns the results object and, for bench with
/// `--table`, the rendered table.
pub fn execute(command: &str, c: &RunConfig) -> Result<(Value, Option<String>), CliError> {
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let single_r = || c.r.as_ref().and_then(|r| r.first().copied()).expect("resolved r");

    if command == "simulate" {
        let spec = c.synthetic.as_ref().expect("resolved synthetic spec");
        let data = generate_synthetic(spec, seed)?;
        let names: Vec<String> = match spec.family {
            DesignFamily::StudentLine => vec!["intercept".into(), "x".into()],
            _ => (1..=spec.p).map(|j| format!("x{j}")).collect(),
        };
        let out = c.data_out.as_ref().expect("resolved data_out");
        write_csv(Path::new(out), &data, &names)?;
        let results = json!({
            "path": out,
            "n": data.n(),
            "p": data.p(),
            "columns": names,
            "dataset_fingerprint": dataset_fingerprint(&data),
        });
        return Ok((results, None));
    }

    let data = load_data(c, seed)?;
    let results = match command {
        "fit" => {
            let fit = ols_fit(&data)?;
            json!({
                "n": data.n(),
                "p": data.p(),
                "estimate": to_value(&fit),
            })
        }
        "probs" => {
            let probs = compute_probabilities(&data, c.scheme.expect("scheme"), c.alpha)?;
            json!({
                "scheme": probs.scheme,
                "alpha": probs.alpha,
                "probs": probs.probs,
                "min": probs.min(),
            })
        }
        "subsample" => {
            let probs = compute_probabilities(&data, c.scheme.expect("scheme"), c.alpha)?;
            let draw = RowSampler::new(&probs)?.draw(single_r(), seed)?;
            let fit = subsample_estimate(&data, &draw, c.mode.expect("mode"))?;
            json!({
                "draw": to_value(&draw),
                "estimate": to_value(&fit),
            })
        }
        "select" => {
            let method = c.methods.as_ref().expect("method")[0];
            select(&data, method, single_r(), seed)?
        }
        "amse" => {
            let r = single_r();
            let probs = compute_probabilities(&data, c.scheme.expect("scheme"), c.alpha)?;
            let sigma2 = match c.sigma2 {
                Some(s) => s,
                None => sigma2_estimate(&data)?,
            };
            let avar = avar_matrix(&data, &probs, r, sigma2)?;
            let mut traces = serde_json::Map::new();
            for target in AmseTarget::ALL {
                let key = to_value(&target).as_str().expect("target name").to_string();
                traces.insert(key, json!(trace_amse(&data, &probs, r, sigma2, target)?));
            }
            json!({
                "sigma2": sigma2,
                "avar": avar.rows(),
                "avar_trace": avar.trace(),
                "trace_amse": traces,
                "diagnostics": to_value(&regularity_diagnostics(&data, &probs, r)),
            })
        }
        "bench" => {
            let p = data.p();
            let mut cfg = BenchConfig::new(
                c.methods.clone().expect("methods"),
                c.r.clone().unwrap_or_else(|| default_r_grid(p)),
                c.reps.expect("reps"),
                seed,
            );
            cfg.measure_time = c.timing == Some(true);
            let report = run_emse_with(&data, &cfg)?;
            let table = (c.table == Some(true)).then(|| report.render_table());
            return Ok((to_value(&report), table));
        }
        other => return Err(usage(format!("unknown command '{other}'"))),
    };
    Ok((results, None))
}

fn select(data: &Dataset, method: Method, r: usize, seed: u64) -> Result<Value, CliError> {
    let mut warnings: Vec<String> = Vec::new();
    let (indices, value, fit) = match method {
        Method::Iboss | Method::Greedy(_) | Method::Exchange(_) => {
            let sel = match method {
                Method::Iboss => iboss_balanced(data, r)?,
                Method::Greedy(c) => greedy_select(data, r, c)?,
                Method::Exchange(c) => exchange_improve(data, &greedy_select(data, r, c)?)?,
                _ => unreachable!(),
            };
            let fit = ols_fit(&data.select_rows(&sel.indices)?)?;
            (sel.indices, Some(sel.value), fit)
        }
        Method::VolumeStandard => {
            let sampler = VolumeSampler::new(data, r, VolumeVariant::Standard)?;
            let rows = sampler.sample(&mut stream(seed))?;
            let value = criterion_value(data, &rows, Criterion::D).ok();
            (rows.clone(), value, ols_fit(&data.select_rows(&rows)?)?)
        }
        Method::VolumeLeveraged => {
            let sampler = VolumeSampler::new(data, r, VolumeVariant::Leveraged)?;
            warnings.extend(sampler.warnings().iter().cloned());
            let rows = sampler.sample(&mut stream(seed))?;
            let q = sampler.proposal().expect("leveraged proposal");
            let weights: Vec<f64> = rows.iter().map(|&i| 1.0 / q[i]).collect();
            (rows.clone(), None, weighted_ls_fit(&data.select_rows(&rows)?, &weights)?)
        }
        other => {
            return Err(usage(format!(
                "select supports iboss, greedy:<A|D|E>, exchange:<A|D|E>, volume and volume-leveraged, not {other}"
            )))
        }
    };
    let mut fit = fit;
    fit.method = method;
    Ok(json!({
        "method": method,
        "indices": indices,
        "criterion_value": value,
        "estimate": to_value(&fit),
        "warnings": warnings,
    }))
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let (command, flags) = cli.command.split();
    if let Some(t) = flags.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // Ignore the error if a pool already exists (in-process callers).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let base = match &flags.config {
        Some(path) => load_config(path, command)?,
        None => RunConfig::default(),
    };
    let config = resolve(command, &flags, base)?;
    let (results, table) = execute(command, &config)?;

    let text = match table {
        Some(t) => t,
        None => {
            let timings_ms = (config.timing == Some(true)).then(|| {
                BTreeMap::from([("total".to_string(), started.elapsed().as_secs_f64() * 1e3)])
            });
            let report = Report {
                schema_version: SCHEMA_VERSION,
                command: command.to_string(),
                config,
                results,
                timings_ms,
            };
            let mut s = serde_json::to_string_pretty(&report).expect("serializable report");
            s.push('\n');
            s
        }
    };
    match &flags.output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}
