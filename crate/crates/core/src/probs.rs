//! Per-row sampling probabilities for the randomized subsampling schemes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{full_rank_svd, leverage_scores, Dataset};

/// Shrinkage weight used for SLEV when none is given.
pub const DEFAULT_SLEV_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    /// Uniform, `1/n`.
    Rand,
    /// Basic leverage, `h_ii / p`.
    Blev,
    /// Shrinkage leverage, `alpha h_ii / p + (1 - alpha) / n`.
    Slev,
    /// Inverse covariance, proportional to `||(X'X)^{-1} x_i||`.
    Ic,
    /// Root leverage, proportional to `sqrt(h_ii)`.
    Rl,
    /// Predictor length, proportional to `||x_i||`.
    Pl,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Rand,
        Scheme::Blev,
        Scheme::Slev,
        Scheme::Ic,
        Scheme::Rl,
        Scheme::Pl,
    ];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Rand => "RAND",
            Scheme::Blev => "BLEV",
            Scheme::Slev => "SLEV",
            Scheme::Ic => "IC",
            Scheme::Rl => "RL",
            Scheme::Pl => "PL",
        };
        f.write_str(s)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rand" | "uniform" => Ok(Scheme::Rand),
            "blev" => Ok(Scheme::Blev),
            "slev" => Ok(Scheme::Slev),
            "ic" => Ok(Scheme::Ic),
            "rl" => Ok(Scheme::Rl),
            "pl" => Ok(Scheme::Pl),
            other => Err(Error::invalid(format!("unknown sampling scheme '{other}'"))),
        }
    }
}

/// A point on the probability simplex, tagged with the scheme that made it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityVector {
    pub probs: Vec<f64>,
    pub scheme: Scheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl ProbabilityVector {
    /// Wraps an arbitrary nonnegative vector, normalizing it to sum to one.
    pub fn from_weights(weights: Vec<f64>, scheme: Scheme, alpha: Option<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("probability vector is empty"));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "weight {} at row {i} is negative or non-finite",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate("all sampling weights are zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(ProbabilityVector {
            probs,
            scheme,
            alpha,
        })
    }

    pub fn uniform(n: usize) -> Self {
        ProbabilityVector {
            probs: vec![1.0 / n as f64; n],
            scheme: Scheme::Rand,
            alpha: None,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Sampling probabilities of `scheme` for every row of `data`.
///
/// `alpha` is only meaningful for SLEV; it defaults to [`DEFAULT_SLEV_ALPHA`]
/// there and must be absent for every other scheme.
pub fn compute_probabilities(
    data: &Dataset,
    scheme: Scheme,
    alpha: Option<f64>,
) -> Result<ProbabilityVector> {
    let n = data.n();
    let p = data.p() as f64;
    if scheme != Scheme::Slev && alpha.is_some() {
        return Err(Error::invalid(format!("alpha is only used by SLEV, not {scheme}")));
    }

    let weights = match scheme {
        Scheme::Rand => return Ok(ProbabilityVector::uniform(n)),
        Scheme::Blev => {
            let h = full_rank_leverage(data)?;
            reject_zero_rows(&h, scheme)?;
            h.into_iter().map(|v| v / p).collect()
        }
        Scheme::Slev => {
            let alpha = alpha.unwrap_or(DEFAULT_SLEV_ALPHA);
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::invalid(format!("SLEV alpha {alpha} outside [0, 1]")));
            }
            let h = full_rank_leverage(data)?;
            if alpha == 1.0 {
                reject_zero_rows(&h, scheme)?;
            }
            let uniform = 1.0 / n as f64;
            let w = h
                .into_iter()
                .map(|v| alpha * v / p + (1.0 - alpha) * uniform)
                .collect();
            return finish(w, scheme, Some(alpha));
        }
        Scheme::Ic => {
            // (X'X)^{-1} x_i = V S^{-1} U_i', so its norm is ||S^{-1} U_i||.
            let svd = full_rank_svd(data.design())?;
            let w: Vec<f64> = (0..n)
                .map(|i| {
                    if data.design().row(i).iter().all(|&v| v == 0.0) {
                        return 0.0;
                    }
                    svd.s
                        .iter()
                        .enumerate()
                        .map(|(k, s)| (svd.u[(i, k)] / s).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            reject_zero_rows(&w, scheme)?;
            w
        }
        Scheme::Rl => {
            let h = full_rank_leverage(data)?;
            reject_zero_rows(&h, scheme)?;
            h.into_iter().map(f64::sqrt).collect()
        }
        Scheme::Pl => (0..n).map(|i| data.design().row(i).norm()).collect(),
    };
    finish(weights, scheme, None)
}

fn finish(weights: Vec<f64>, scheme: Scheme, alpha: Option<f64>) -> Result<ProbabilityVector> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate(format!(
            "{scheme} weights have total {total}; every row is zero"
        )));
    }
    ProbabilityVector::from_weights(weights, scheme, alpha)
}

fn full_rank_leverage(data: &Dataset) -> Result<Vec<f64>> {
    let lev = leverage_scores(data)?;
    if lev.rank < data.p() {
        return Err(Error::RankDeficient {
            rank: lev.rank,
            required: data.p(),
        });
    }
    Ok(lev.scores)
}

fn reject_zero_rows(weights: &[f64], scheme: Scheme) -> Result<()> {
    match weights.iter().position(|&w| w <= 0.0) {
        Some(i) => Err(Error::Degenerate(format!(
            "row {i} has zero {scheme} weight; use SLEV with alpha < 1 to bound probabilities below"
        ))),
        None => Ok(()),
    }
}
