//! Asymptotic variance of the weighted subsample estimator and the AMSE
//! functionals built from it.
//!
//! With `Omega = diag(1 / (r pi_i))`,
//!
//! ```text
//! AVar = s2 (X'X)^{-1} + s2 (X'X)^{-1} X' Omega X (X'X)^{-1}.
//! ```
//!
//! Everything is computed from the thin SVD `X = U S V'`, where
//! `(X'X)^{-1} x_i = V S^{-1} U_i'`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{full_rank_svd, ols_fit, Dataset, ThinSvd};
use crate::probs::ProbabilityVector;

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticVariance {
    /// `p x p`, symmetric positive semi-definite.
    pub matrix: DMatrix<f64>,
    pub sigma2: f64,
    pub r: usize,
}

impl AsymptoticVariance {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|row| row.iter().copied().collect())
            .collect()
    }
}

/// Quantity whose asymptotic mean squared error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmseTarget {
    /// The coefficients themselves.
    #[serde(rename = "beta")]
    Beta,
    /// The regression surface `X beta`.
    #[serde(rename = "Xbeta")]
    XBeta,
    /// `X'X beta`.
    #[serde(rename = "XtXbeta")]
    XtXBeta,
}

impl AmseTarget {
    pub const ALL: [AmseTarget; 3] = [AmseTarget::Beta, AmseTarget::XBeta, AmseTarget::XtXBeta];
}

/// Finite-sample quantities behind the two regularity conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityDiagnostics {
    /// Extreme eigenvalues of `X'X / n`.
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub pi_min: f64,
    /// `lambda_max / lambda_min`, the squared condition number of `X`.
    pub condition_ratio: f64,
    pub n: usize,
    pub r: usize,
}

fn validate(data: &Dataset, probs: &ProbabilityVector, r: usize, sigma2: f64) -> Result<()> {
    if probs.len() != data.n() {
        return Err(Error::invalid(format!(
            "probability vector has length {} but n = {}",
            probs.len(),
            data.n()
        )));
    }
    if let Some(i) = probs.probs.iter().position(|&q| !(q > 0.0)) {
        return Err(Error::invalid(format!(
            "sampling probability of row {i} is {}; the variance needs every probability positive",
            probs.probs[i]
        )));
    }
    if r < 1 {
        return Err(Error::invalid("subsample size r must be at least 1"));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(format!("sigma2 must be positive and finite, got {sigma2}")));
    }
    Ok(())
}

/// Squared norms `||(X'X)^{-1} x_i||^2` for every row.
fn inverse_row_norms2(svd: &ThinSvd) -> Vec<f64> {
    (0..svd.u.nrows())
        .map(|i| {
            svd.s
                .iter()
                .enumerate()
                .map(|(k, s)| (svd.u[(i, k)] / s).powi(2))
                .sum()
        })
        .collect()
}

/// Asymptotic variance of the weighted subsample estimator.
pub fn avar_matrix(
    data: &Dataset,
    probs: &ProbabilityVector,
    r: usize,
    sigma2: f64,
) -> Result<AsymptoticVariance> {
    validate(data, probs, r, sigma2)?;
    let svd = full_rank_svd(data.design())?;
    let (n, p) = (data.n(), data.p());
    let v = svd.v_t.transpose();

    // Rows of z are (X'X)^{-1} x_i.
    let s_inv = DMatrix::from_diagonal(&svd.s.map(|s| 1.0 / s));
    let z = &svd.u * &s_inv * &svd.v_t;
    let mut weighted = z.clone();
    for i in 0..n {
        let omega = 1.0 / (r as f64 * probs.probs[i]);
        weighted.row_mut(i).scale_mut(omega);
    }
    let sampling = z.tr_mul(&weighted);
    let inv_gram = &v * (&s_inv * &s_inv) * v.transpose();

    let mut matrix = (inv_gram + sampling) * sigma2;
    // exact symmetry
    for a in 0..p {
        for b in (a + 1)..p {
            let m = 0.5 * (matrix[(a, b)] + matrix[(b, a)]);
            matrix[(a, b)] = m;
            matrix[(b, a)] = m;
        }
    }
    Ok(AsymptoticVariance { matrix, sigma2, r })
}

/// Trace of the asymptotic MSE of the estimate of `target`.
///
/// The first term is the trace of the full-sample covariance of the target
/// and does not depend on the probabilities; the second is
/// `(s2 / r) sum_i a_i^2 / pi_i` with `a_i` equal to `||(X'X)^{-1} x_i||`,
/// `sqrt(h_ii)` or `||x_i||` for the three targets.
pub fn trace_amse(
    data: &Dataset,
    probs: &ProbabilityVector,
    r: usize,
    sigma2: f64,
    target: AmseTarget,
) -> Result<f64> {
    validate(data, probs, r, sigma2)?;
    let svd = full_rank_svd(data.design())?;
    let p = data.p();
    let (leading, norms2): (f64, Vec<f64>) = match target {
        AmseTarget::Beta => (
            svd.s.iter().map(|s| 1.0 / (s * s)).sum(),
            inverse_row_norms2(&svd),
        ),
        AmseTarget::XBeta => (
            p as f64,
            (0..data.n())
                .map(|i| (0..p).map(|k| svd.u[(i, k)].powi(2)).sum())
                .collect(),
        ),
        AmseTarget::XtXBeta => (
            svd.s.iter().map(|s| s * s).sum(),
            (0..data.n())
                .map(|i| data.design().row(i).norm_squared())
                .collect(),
        ),
    };
    let sampling: f64 = norms2
        .iter()
        .zip(&probs.probs)
        .map(|(a2, q)| a2 / q)
        .sum();
    Ok(sigma2 * leading + sigma2 / r as f64 * sampling)
}

/// `RSS / (n - p)` from the full-sample least-squares fit.
pub fn sigma2_estimate(data: &Dataset) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::invalid(format!(
            "need n > p to estimate the noise variance, got n = {n}, p = {p}"
        )));
    }
    let fit = ols_fit(data)?;
    if fit.rank < p {
        return Err(Error::RankDeficient {
            rank: fit.rank,
            required: p,
        });
    }
    Ok(fit.residual_ss / (n - p) as f64)
}

/// Reports the eigenvalue range of `X'X / n` and the smallest sampling
/// probability. No pass or fail ruling is made.
pub fn regularity_diagnostics(data: &Dataset, probs: &ProbabilityVector, r: usize) -> RegularityDiagnostics {
    let n = data.n();
    let sv = data.design().singular_values();
    let mut lambda_min = sv.min().powi(2) / n as f64;
    if n < data.p() {
        lambda_min = 0.0;
    }
    let lambda_max = sv.max().powi(2) / n as f64;
    let condition_ratio = if lambda_min > 0.0 {
        lambda_max / lambda_min
    } else {
        f64::INFINITY
    };
    RegularityDiagnostics {
        lambda_min,
        lambda_max,
        pi_min: probs.min().max(0.0),
        condition_ratio,
        n,
        r,
    }
}
