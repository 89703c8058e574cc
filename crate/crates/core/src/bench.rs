//! Empirical MSE benchmark on bootstrap replicates, plus synthetic data.
//!
//! For each replicate a bootstrap sample of `n` rows is drawn uniformly with
//! replacement from the data. Every method is run on that sample at every
//! subsample size and scored by `||beta_hat - beta_ols||^2`, where `beta_ols`
//! is the full fit on the original data. EMSE is the mean over replicates.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lsq::{ols_fit, weighted_ls_fit, Dataset, EstimateResult};
use crate::method::Method;
use crate::optdesign::{exchange_improve, greedy_select, iboss_balanced};
use crate::probs::compute_probabilities;
use crate::rng::{derive_seed, stream};
use crate::sampler::{subsample_estimate, EstimateMode, RowSampler};
use crate::volume::{VolumeSampler, VolumeVariant};

pub const DEFAULT_REPS: usize = 100;
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Stream key for the bootstrap resample, distinct from every method key.
const BOOTSTRAP_KEY: u64 = 0xb007_57ba_b007_57ba;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignFamily {
    /// Independent standard normal entries.
    Gaussian,
    /// Independent Student t entries.
    StudentT { df: f64 },
    /// Intercept column plus one t(5) column.
    StudentLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub family: DesignFamily,
    pub beta0: Vec<f64>,
    pub noise_sd: f64,
}

impl SyntheticSpec {
    /// `y = 1 + x + eps` with `x ~ t(5)` and standard normal noise.
    pub fn student_line(n: usize) -> Self {
        SyntheticSpec {
            n,
            p: 2,
            family: DesignFamily::StudentLine,
            beta0: vec![1.0, 1.0],
            noise_sd: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p must be at least 1"));
        }
        if self.n < self.p {
            return Err(Error::invalid(format!("n = {} is below p = {}", self.n, self.p)));
        }
        if self.beta0.len() != self.p {
            return Err(Error::invalid(format!(
                "beta0 has length {}, expected p = {}",
                self.beta0.len(),
                self.p
            )));
        }
        if self.beta0.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("beta0 must be finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd)));
        }
        match self.family {
            DesignFamily::StudentT { df } if !(df > 2.0 && df.is_finite()) => {
                Err(Error::invalid(format!("student t needs df > 2, got {df}")))
            }
            DesignFamily::StudentLine if self.p != 2 => Err(Error::invalid("the student-line family has p = 2")),
            _ => Ok(()),
        }
    }
}

/// Draws a dataset from `spec`; the same `(spec, seed)` always gives the same data.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = stream(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let student = |df: f64| StudentT::new(df).map_err(|e| Error::invalid(format!("bad t distribution: {e}")));

    let mut x = DMatrix::zeros(n, p);
    match spec.family {
        DesignFamily::Gaussian => {
            for i in 0..n {
                for j in 0..p {
                    x[(i, j)] = normal.sample(&mut rng);
                }
            }
        }
        DesignFamily::StudentT { df } => {
            let t = student(df)?;
            for i in 0..n {
                for j in 0..p {
                    x[(i, j)] = t.sample(&mut rng);
                }
            }
        }
        DesignFamily::StudentLine => {
            let t = student(5.0)?;
            for i in 0..n {
                x[(i, 0)] = 1.0;
                x[(i, 1)] = t.sample(&mut rng);
            }
        }
    }
    let beta = DVector::from_column_slice(&spec.beta0);
    let mut y = &x * beta;
    if spec.noise_sd > 0.0 {
        for v in y.iter_mut() {
            *v += spec.noise_sd * normal.sample(&mut rng);
        }
    }
    Dataset::new(x, y)
}

/// Subsample sizes `5p, 10p, 15p, 20p`.
pub fn default_r_grid(p: usize) -> Vec<usize> {
    vec![5 * p, 10 * p, 15 * p, 20 * p]
}

/// SHA-256 of the dimensions and the little-endian bits of every entry.
pub fn dataset_fingerprint(data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((data.n() as u64).to_le_bytes());
    h.update((data.p() as u64).to_le_bytes());
    for v in data.design().iter().chain(data.response().iter()) {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub r_values: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Record wall-clock time per method call. Off by default so reports are
    /// reproducible byte for byte.
    pub measure_time: bool,
}

impl BenchConfig {
    pub fn new(methods: Vec<Method>, r_values: Vec<usize>, reps: usize, seed: u64) -> Self {
        BenchConfig {
            methods,
            r_values,
            reps,
            seed,
            measure_time: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub method: Method,
    pub r: usize,
    /// Mean squared distance to the full-data fit over successful replicates.
    pub emse: Option<f64>,
    /// Sample standard deviation of the per-replicate squared distances.
    pub emse_sd: Option<f64>,
    pub mean_time_ms: Option<f64>,
    pub successes: usize,
    pub failures: usize,
    pub status: RecordStatus,
    /// First error seen, if any replicate failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub records: Vec<BenchRecord>,
    pub reps: usize,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub beta_ols: Vec<f64>,
}

impl BenchmarkReport {
    pub fn record(&self, method: Method, r: usize) -> Option<&BenchRecord> {
        self.records.iter().find(|rec| rec.method == method && rec.r == r)
    }

    pub fn emse(&self, method: Method, r: usize) -> Option<f64> {
        self.record(method, r).and_then(|rec| rec.emse)
    }

    /// Aligned text: one row per method, one `mean(sd)` column per subsample size.
    pub fn render_table(&self) -> String {
        let mut methods: Vec<Method> = Vec::new();
        let mut rs: Vec<usize> = Vec::new();
        for rec in &self.records {
            if !methods.contains(&rec.method) {
                methods.push(rec.method);
            }
            if !rs.contains(&rec.r) {
                rs.push(rec.r);
            }
        }
        let mut rows: Vec<Vec<String>> = vec![std::iter::once("method".to_string())
            .chain(rs.iter().map(|r| format!("r={r}")))
            .collect()];
        for m in &methods {
            let mut row = vec![m.to_string()];
            for &r in &rs {
                row.push(match self.record(*m, r) {
                    Some(BenchRecord {
                        emse: Some(e),
                        emse_sd,
                        ..
                    }) => match emse_sd {
                        Some(sd) => format!("{}({})", sig(*e), sig(*sd)),
                        None => sig(*e),
                    },
                    Some(_) => "failed".to_string(),
                    None => "-".to_string(),
                });
            }
            rows.push(row);
        }
        let ncol = rows[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| rows.iter().map(|row| row[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in rows {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn sig(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

/// EMSE over `reps` bootstrap replicates for every `(method, r)` pair, untimed.
pub fn run_emse(
    data: &Dataset,
    methods: &[Method],
    r_values: &[usize],
    reps: usize,
    seed: u64,
) -> Result<BenchmarkReport> {
    run_emse_with(data, &BenchConfig::new(methods.to_vec(), r_values.to_vec(), reps, seed))
}

struct Outcome {
    sq_err: Result<f64>,
    millis: f64,
}

pub fn run_emse_with(data: &Dataset, config: &BenchConfig) -> Result<BenchmarkReport> {
    let (n, p) = (data.n(), data.p());
    if config.reps < 1 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    if config.methods.is_empty() || config.r_values.is_empty() {
        return Err(Error::invalid("need at least one method and one subsample size"));
    }
    if let Some(&r) = config.r_values.iter().find(|&&r| r < p) {
        return Err(Error::invalid(format!("subsample size r = {r} is below p = {p}")));
    }
    for m in &config.methods {
        if matches!(m, Method::Ols | Method::Wls) {
            return Err(Error::invalid(format!("{m} is not a benchmark method")));
        }
    }
    let mut pairs = Vec::new();
    for &m in &config.methods {
        for &r in &config.r_values {
            if pairs.contains(&(m, r)) {
                return Err(Error::invalid(format!("duplicate benchmark pair ({m}, r = {r})")));
            }
            pairs.push((m, r));
        }
    }

    let full = ols_fit(data)?;
    if full.is_rank_deficient() {
        return Err(Error::RankDeficient {
            rank: full.rank,
            required: p,
        });
    }
    let beta_ols = DVector::from_column_slice(&full.beta);

    let per_rep: Vec<Vec<Outcome>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(derive_seed(config.seed, &[rep as u64, BOOTSTRAP_KEY]));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let boot = data.select_rows(&rows);
            pairs
                .iter()
                .map(|&(method, r)| {
                    let boot = match &boot {
                        Ok(b) => b,
                        Err(e) => {
                            return Outcome {
                                sq_err: Err(e.clone()),
                                millis: 0.0,
                            }
                        }
                    };
                    let seed = derive_seed(config.seed, &[rep as u64, method.stream_key(), r as u64]);
                    let start = config.measure_time.then(Instant::now);
                    let fit = run_method(boot, method, r, seed);
                    let millis = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
                    let sq_err = fit.and_then(|fit| {
                        if fit.is_rank_deficient() {
                            return Err(Error::RankDeficient {
                                rank: fit.rank,
                                required: p,
                            });
                        }
                        Ok((DVector::from_column_slice(&fit.beta) - &beta_ols).norm_squared())
                    });
                    Outcome { sq_err, millis }
                })
                .collect()
        })
        .collect();

    let records = pairs
        .iter()
        .enumerate()
        .map(|(k, &(method, r))| {
            let mut errs = Vec::new();
            let mut first_error = None;
            let mut total_ms = 0.0;
            for rep in &per_rep {
                total_ms += rep[k].millis;
                match &rep[k].sq_err {
                    Ok(e) => errs.push(*e),
                    Err(e) => {
                        first_error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            let successes = errs.len();
            let failures = config.reps - successes;
            let failed = 2 * failures > config.reps;
            let (emse, emse_sd) = if failed {
                (None, None)
            } else {
                let mean = errs.iter().sum::<f64>() / successes as f64;
                let sd = (successes > 1).then(|| {
                    let ss: f64 = errs.iter().map(|e| (e - mean).powi(2)).sum();
                    (ss / (successes - 1) as f64).sqrt()
                });
                (Some(mean), sd)
            };
            BenchRecord {
                method,
                r,
                emse,
                emse_sd,
                mean_time_ms: config.measure_time.then(|| total_ms / config.reps as f64),
                successes,
                failures,
                status: if failed { RecordStatus::Failed } else { RecordStatus::Ok },
                error: first_error,
            }
        })
        .collect();

    Ok(BenchmarkReport {
        records,
        reps: config.reps,
        seed: config.seed,
        dataset_fingerprint: dataset_fingerprint(data),
        beta_ols: full.beta,
    })
}

/// Runs one method on `data` at subsample size `r`.
pub fn run_method(data: &Dataset, method: Method, r: usize, seed: u64) -> Result<EstimateResult> {
    let mut fit = match method {
        Method::Ols | Method::Full => ols_fit(data)?,
        Method::Wls => return Err(Error::invalid("WLS needs explicit weights")),
        Method::Rand | Method::Blev | Method::Slev { .. } | Method::Ic | Method::Rl | Method::Pl => {
            let (scheme, alpha) = method.scheme().expect("randomized method");
            let probs = compute_probabilities(data, scheme, alpha)?;
            let draw = RowSampler::new(&probs)?.draw(r, seed)?;
            subsample_estimate(data, &draw, EstimateMode::Weighted)?
        }
        Method::Iboss => ols_fit(&data.select_rows(&iboss_balanced(data, r)?.indices)?)?,
        Method::Greedy(c) => ols_fit(&data.select_rows(&greedy_select(data, r, c)?.indices)?)?,
        Method::Exchange(c) => {
            let start = greedy_select(data, r, c)?;
            ols_fit(&data.select_rows(&exchange_improve(data, &start)?.indices)?)?
        }
        Method::VolumeStandard => {
            let sampler = VolumeSampler::new(data, r, VolumeVariant::Standard)?;
            let rows = sampler.sample(&mut stream(seed))?;
            ols_fit(&data.select_rows(&rows)?)?
        }
        Method::VolumeLeveraged => {
            let sampler = VolumeSampler::new(data, r, VolumeVariant::Leveraged)?;
            let rows = sampler.sample(&mut stream(seed))?;
            let q = sampler.proposal().expect("leveraged proposal");
            let weights: Vec<f64> = rows.iter().map(|&i| 1.0 / q[i]).collect();
            weighted_ls_fit(&data.select_rows(&rows)?, &weights)?
        }
    };
    fit.method = method;
    Ok(fit)
}
