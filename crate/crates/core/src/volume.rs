//! Exact volume sampling at desk scale.
//!
//! Standard volume sampling picks a size-`r` subset `S` with probability
//! `det(X_S' X_S) / (C(n-p, r-p) det(X'X))`. Leveraged volume sampling picks a
//! sequence `tau` in `{0..n}^r` with probability proportional to
//! `det(sum_k x_tau_k x_tau_k' / q_tau_k) * prod_k q_tau_k`, `q_i = h_ii / p`.
//!
//! The standard variant is sampled by enumerating every subset. The leveraged
//! variant is enumerated when `n^r` is small and otherwise sampled by rejection:
//! propose `tau` i.i.d. from `q`, accept with `det(B_tau) / r^p`, where
//! `B_tau = sum_k z_tau_k z_tau_k' / q_tau_k` in whitened coordinates
//! `z = L^{-1} x`, `L L' = X'X`. Every summand has trace `p`, so
//! `det(B_tau) <= (tr B_tau / p)^p = r^p` and the ratio is a valid probability.

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{leverage_scores, Dataset};
use crate::rng;

/// Largest `n` for which standard volume sampling enumerates subsets.
pub const MAX_ENUMERATION_N: usize = 20;
/// Largest `n^r` for which leveraged sequences are enumerated.
pub const MAX_SEQUENCE_STATES: u64 = 2_000_000;
/// Proposals tried before the rejection sampler gives up.
const MAX_PROPOSALS: u64 = 50_000_000;

/// Discrete distribution over index sets (standard) or index sequences (leveraged).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetDistribution {
    pub subsets: Vec<Vec<usize>>,
    pub masses: Vec<f64>,
}

impl SubsetDistribution {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeVariant {
    Standard,
    Leveraged,
}

/// How the leveraged variant draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeveragedStrategy {
    /// Enumerate when `n^r <= MAX_SEQUENCE_STATES`, reject otherwise.
    Auto,
    Enumerate,
    Rejection,
}

/// One volume-sampling draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeSample {
    /// Sorted distinct rows (standard) or the drawn sequence (leveraged).
    pub indices: Vec<usize>,
    pub variant: VolumeVariant,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn gram_det(data: &Dataset, rows: &[usize], weights: Option<&[f64]>) -> f64 {
    let p = data.p();
    let mut g = DMatrix::zeros(p, p);
    for (k, &i) in rows.iter().enumerate() {
        let x = data.row(i);
        let w = weights.map_or(1.0, |w| w[k]);
        g.ger(w, &x, &x, 1.0);
    }
    g.determinant().max(0.0)
}

/// Visits every `r`-combination of `0..n` in lexicographic order.
fn for_each_combination(n: usize, r: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..r).collect();
    if r > n {
        return;
    }
    loop {
        f(&idx);
        let mut k = r;
        while k > 0 && idx[k - 1] == n - r + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return;
        }
        idx[k - 1] += 1;
        for j in k..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn require_full_rank(data: &Dataset) -> Result<Vec<f64>> {
    let lev = leverage_scores(data)?;
    if lev.rank < data.p() {
        return Err(Error::RankDeficient {
            rank: lev.rank,
            required: data.p(),
        });
    }
    Ok(lev.scores)
}

/// Every size-`r` subset with its standard volume-sampling mass.
///
/// Masses use the closed-form normalizer and are not renormalized.
pub fn standard_volume_distribution(data: &Dataset, r: usize) -> Result<SubsetDistribution> {
    let (n, p) = (data.n(), data.p());
    if n > MAX_ENUMERATION_N {
        return Err(Error::Capacity(format!(
            "standard volume sampling enumerates subsets and supports n <= {MAX_ENUMERATION_N}, got n = {n}"
        )));
    }
    if r < p || r > n {
        return Err(Error::invalid(format!("need p <= r <= n, got p = {p}, r = {r}, n = {n}")));
    }
    require_full_rank(data)?;
    let all: Vec<usize> = (0..n).collect();
    let normalizer = binomial(n - p, r - p) * gram_det(data, &all, None);
    if !(normalizer > 0.0) {
        return Err(Error::Degenerate("det(X'X) is zero".into()));
    }
    let mut subsets = Vec::new();
    let mut masses = Vec::new();
    for_each_combination(n, r, |s| {
        subsets.push(s.to_vec());
        masses.push(gram_det(data, s, None) / normalizer);
    });
    Ok(SubsetDistribution { subsets, masses })
}

fn leveraged_proposal(data: &Dataset, r: usize) -> Result<(Vec<f64>, Vec<String>)> {
    let (n, p) = (data.n(), data.p());
    if r < p {
        return Err(Error::invalid(format!("need r >= p, got p = {p}, r = {r}")));
    }
    let h = require_full_rank(data)?;
    if let Some(i) = h.iter().position(|&v| v <= 0.0) {
        return Err(Error::Degenerate(format!("row {i} has zero leverage, so q_{i} = 0")));
    }
    let q: Vec<f64> = h.iter().map(|v| v / p as f64).collect();
    let mut warnings = Vec::new();
    if r <= 4 * p * p {
        warnings.push(format!(
            "r = {r} does not exceed 4p^2 = {}; the leveraged volume asymptotics assume it does",
            4 * p * p
        ));
    }
    debug_assert_eq!(q.len(), n);
    Ok((q, warnings))
}

fn sequence_states(n: usize, r: usize) -> Option<u64> {
    (n as u64).checked_pow(u32::try_from(r).ok()?)
}

/// Every sequence in `{0..n}^r` with its normalized leveraged volume mass.
pub fn leveraged_volume_distribution(data: &Dataset, r: usize) -> Result<SubsetDistribution> {
    let n = data.n();
    let states = sequence_states(n, r).filter(|&s| s <= MAX_SEQUENCE_STATES);
    let Some(states) = states else {
        return Err(Error::Capacity(format!(
            "n^r = {n}^{r} exceeds {MAX_SEQUENCE_STATES} sequences"
        )));
    };
    let (q, _) = leveraged_proposal(data, r)?;
    let mut subsets = Vec::with_capacity(states as usize);
    let mut masses = Vec::with_capacity(states as usize);
    let mut tau = vec![0usize; r];
    let mut w = vec![0.0; r];
    for _ in 0..states {
        let mut prod_q = 1.0;
        for (k, &i) in tau.iter().enumerate() {
            w[k] = 1.0 / q[i];
            prod_q *= q[i];
        }
        subsets.push(tau.clone());
        masses.push(gram_det(data, &tau, Some(&w)) * prod_q);
        // odometer increment, last position fastest
        for k in (0..r).rev() {
            tau[k] += 1;
            if tau[k] < n {
                break;
            }
            tau[k] = 0;
        }
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("every sequence has zero volume".into()));
    }
    masses.iter_mut().for_each(|m| *m /= total);
    Ok(SubsetDistribution { subsets, masses })
}

enum Engine {
    Enumerated {
        dist: SubsetDistribution,
        table: WeightedAliasIndex<f64>,
    },
    Rejection {
        proposal: WeightedAliasIndex<f64>,
        /// Whitened rows scaled by `1 / sqrt(q_i)`.
        scaled: Vec<DVector<f64>>,
        r: usize,
    },
}

/// Reusable volume sampler for one dataset and subset size.
pub struct VolumeSampler {
    variant: VolumeVariant,
    engine: Engine,
    /// Leverage proposal `q_i = h_ii / p` (leveraged variant only).
    proposal: Option<Vec<f64>>,
    warnings: Vec<String>,
}

impl VolumeSampler {
    pub fn new(data: &Dataset, r: usize, variant: VolumeVariant) -> Result<Self> {
        Self::with_strategy(data, r, variant, LeveragedStrategy::Auto)
    }

    pub fn with_strategy(
        data: &Dataset,
        r: usize,
        variant: VolumeVariant,
        strategy: LeveragedStrategy,
    ) -> Result<Self> {
        let mut proposal = None;
        let (engine, warnings) = match variant {
            VolumeVariant::Standard => (enumerated(standard_volume_distribution(data, r)?)?, Vec::new()),
            VolumeVariant::Leveraged => {
                let (q, warnings) = leveraged_proposal(data, r)?;
                let small = sequence_states(data.n(), r).is_some_and(|s| s <= MAX_SEQUENCE_STATES);
                let enumerate = match strategy {
                    LeveragedStrategy::Auto => small,
                    LeveragedStrategy::Enumerate => true,
                    LeveragedStrategy::Rejection => false,
                };
                let engine = if enumerate {
                    enumerated(leveraged_volume_distribution(data, r)?)?
                } else {
                    rejection_engine(data, &q, r)?
                };
                proposal = Some(q);
                (engine, warnings)
            }
        };
        Ok(VolumeSampler {
            variant,
            engine,
            proposal,
            warnings,
        })
    }

    /// `q_i = h_ii / p` for the leveraged variant.
    pub fn proposal(&self) -> Option<&[f64]> {
        self.proposal.as_deref()
    }

    pub fn variant(&self) -> VolumeVariant {
        self.variant
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        match &self.engine {
            Engine::Enumerated { dist, table } => Ok(dist.subsets[table.sample(rng)].clone()),
            Engine::Rejection {
                proposal,
                scaled,
                r,
            } => {
                let p = scaled[0].len();
                let bound = (*r as f64).powi(p as i32);
                let mut b = DMatrix::zeros(p, p);
                for _ in 0..MAX_PROPOSALS {
                    b.fill(0.0);
                    let tau: Vec<usize> = (0..*r).map(|_| proposal.sample(rng)).collect();
                    for &i in &tau {
                        b.ger(1.0, &scaled[i], &scaled[i], 1.0);
                    }
                    let accept = (b.determinant() / bound).clamp(0.0, 1.0);
                    if rng.random::<f64>() < accept {
                        return Ok(tau);
                    }
                }
                Err(Error::Numerical(format!(
                    "rejection sampler accepted nothing in {MAX_PROPOSALS} proposals"
                )))
            }
        }
    }
}

fn enumerated(dist: SubsetDistribution) -> Result<Engine> {
    if !(dist.total_mass() > 0.0) {
        return Err(Error::Degenerate("every candidate has zero determinant".into()));
    }
    let table = WeightedAliasIndex::new(dist.masses.clone())
        .map_err(|e| Error::Numerical(format!("cannot build alias table: {e}")))?;
    Ok(Engine::Enumerated { dist, table })
}

fn rejection_engine(data: &Dataset, q: &[f64], r: usize) -> Result<Engine> {
    let xtx = data.design().tr_mul(data.design());
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Numerical("X'X is not positive definite".into()))?;
    let l = chol.l();
    let mut scaled = Vec::with_capacity(data.n());
    for (i, &qi) in q.iter().enumerate() {
        let z = l
            .solve_lower_triangular(&data.row(i))
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        scaled.push(z / qi.sqrt());
    }
    let proposal = WeightedAliasIndex::new(q.to_vec())
        .map_err(|e| Error::Numerical(format!("cannot build alias table: {e}")))?;
    Ok(Engine::Rejection {
        proposal,
        scaled,
        r,
    })
}

/// One seeded volume-sampling draw.
pub fn volume_sample(data: &Dataset, r: usize, variant: VolumeVariant, seed: u64) -> Result<VolumeSample> {
    let sampler = VolumeSampler::new(data, r, variant)?;
    let indices = sampler.sample(&mut rng::stream(seed))?;
    Ok(VolumeSample {
        indices,
        variant,
        seed,
        warnings: sampler.warnings,
    })
}
