//! Dense least-squares kernels: datasets, OLS, weighted LS and leverage scores.
//!
//! Fits go through a Householder QR with column-norm pivoting. When the
//! numerical rank falls below `p` the trailing block of `R` is dropped and the
//! remaining trapezoidal system is solved in its minimum-norm form, so every
//! fit returns the Moore-Penrose solution. Leverage scores come from a thin SVD.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::method::Method;

/// An `n x p` design matrix paired with `n` responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: DMatrix<f64>,
    response: DVector<f64>,
}

impl Dataset {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        let (n, p) = design.shape();
        if n < 1 {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        if p < 1 {
            return Err(Error::invalid("dataset needs at least one predictor"));
        }
        if response.len() != n {
            return Err(Error::invalid(format!(
                "response has length {} but design has {n} rows",
                response.len()
            )));
        }
        for j in 0..p {
            for i in 0..n {
                if !design[(i, j)].is_finite() {
                    return Err(Error::NonFinite {
                        what: "design",
                        row: i,
                        col: Some(j),
                    });
                }
            }
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "response",
                row: i,
                col: None,
            });
        }
        Ok(Dataset { design, response })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], response: &[f64]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        let p = rows[0].len();
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::invalid(format!(
                "row {i} has {} entries, expected {p}",
                rows[i].len()
            )));
        }
        let design = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Dataset::new(design, DVector::from_column_slice(response))
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    /// Row `i` of the design as an owned vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.design.row(i).transpose()
    }

    /// Dataset made of the given rows, in order, repeats allowed.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::invalid("row selection is empty"));
        }
        let n = self.n();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("row index {bad} out of range for n = {n}")));
        }
        let design = self.design.select_rows(indices);
        let response = DVector::from_iterator(
            indices.len(),
            indices.iter().map(|&i| self.response[i]),
        );
        Ok(Dataset { design, response })
    }

    /// Copy with a leading column of ones.
    pub fn with_intercept(&self) -> Dataset {
        let design = self.design.clone().insert_column(0, 1.0);
        Dataset {
            design,
            response: self.response.clone(),
        }
    }
}

/// Coefficients from one fit plus the diagnostics that matter downstream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub beta: Vec<f64>,
    pub method: Method,
    /// Numerical rank of the design the fit actually used.
    pub rank: usize,
    /// Unweighted sum of squared residuals over the rows used in the fit.
    pub residual_ss: f64,
}

impl EstimateResult {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.beta.len()
    }
}

/// Diagonal of the hat matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeverageVector {
    pub scores: Vec<f64>,
    /// Numerical rank of the design the scores were computed from.
    pub rank: usize,
}

impl LeverageVector {
    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }
}

/// Singular values at or below this are treated as zero.
pub(crate) fn rank_tolerance(rows: usize, cols: usize, largest: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * largest
}

/// Minimum-norm least-squares solution of `min ||y - X b||`.
pub fn ols_fit(data: &Dataset) -> Result<EstimateResult> {
    let (beta, rank) = min_norm_solve(data.design(), data.response())?;
    let residual_ss = residual_ss(data.design(), data.response(), &beta);
    Ok(EstimateResult {
        beta: beta.as_slice().to_vec(),
        method: Method::Ols,
        rank,
        residual_ss,
    })
}

/// Minimizer of `sum_i w_i (y_i - x_i' b)^2`, solved on rows scaled by `sqrt(w_i)`.
pub fn weighted_ls_fit(data: &Dataset, weights: &[f64]) -> Result<EstimateResult> {
    let n = data.n();
    if weights.len() != n {
        return Err(Error::invalid(format!(
            "got {} weights for {n} observations",
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::invalid(format!(
            "weight {} at row {i} is not strictly positive and finite",
            weights[i]
        )));
    }
    let mut scaled_x = data.design().clone();
    let mut scaled_y = data.response().clone();
    for (i, w) in weights.iter().enumerate() {
        let s = w.sqrt();
        scaled_x.row_mut(i).scale_mut(s);
        scaled_y[i] *= s;
    }
    let (beta, rank) = min_norm_solve(&scaled_x, &scaled_y)?;
    let residual_ss = residual_ss(data.design(), data.response(), &beta);
    Ok(EstimateResult {
        beta: beta.as_slice().to_vec(),
        method: Method::Wls,
        rank,
        residual_ss,
    })
}

/// `h_ii = ||U_i||^2` where `U` spans the column space of the design.
pub fn leverage_scores(data: &Dataset) -> Result<LeverageVector> {
    let x = data.design();
    let (n, p) = x.shape();
    let svd = x.clone().svd(true, false);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
    let smax = svd.singular_values.max();
    let tol = rank_tolerance(n, p, smax);
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > tol)
        .collect();
    // A zero row has zero leverage exactly; the SVD would leave rounding noise.
    let scores = (0..n)
        .map(|i| {
            if x.row(i).iter().all(|&v| v == 0.0) {
                0.0
            } else {
                kept.iter().map(|&k| u[(i, k)] * u[(i, k)]).sum()
            }
        })
        .collect();
    Ok(LeverageVector {
        scores,
        rank: kept.len(),
    })
}

pub(crate) fn residual_ss(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (y - x * beta).norm_squared()
}

/// Householder QR with column-norm pivoting: `X P = Q R`.
pub(crate) struct PivotedQr {
    /// `R` on and above the diagonal, Householder vectors (unit leading entry implied) below.
    factors: DMatrix<f64>,
    tau: Vec<f64>,
    /// `perm[k]` is the original column sitting in position `k`.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub(crate) fn new(mut a: DMatrix<f64>) -> PivotedQr {
        let (m, n) = a.shape();
        let k = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![0.0; k];

        for i in 0..k {
            // Trailing norms are recomputed rather than downdated; p is small.
            let mut best = i;
            let mut best_norm = -1.0;
            for j in i..n {
                let norm = a.view((i, j), (m - i, 1)).norm_squared();
                if norm > best_norm {
                    best_norm = norm;
                    best = j;
                }
            }
            if best != i {
                a.swap_columns(i, best);
                perm.swap(i, best);
            }

            let norm = best_norm.sqrt();
            if norm == 0.0 {
                tau[i] = 0.0;
                continue;
            }
            let alpha = a[(i, i)];
            let beta = if alpha >= 0.0 { -norm } else { norm };
            let scale = alpha - beta;
            for r in (i + 1)..m {
                a[(r, i)] /= scale;
            }
            tau[i] = (beta - alpha) / beta;
            a[(i, i)] = beta;

            for j in (i + 1)..n {
                let mut dot = a[(i, j)];
                for r in (i + 1)..m {
                    dot += a[(r, i)] * a[(r, j)];
                }
                let f = tau[i] * dot;
                a[(i, j)] -= f;
                for r in (i + 1)..m {
                    let v = a[(r, i)];
                    a[(r, j)] -= f * v;
                }
            }
        }

        let rmax = if k > 0 { a[(0, 0)].abs() } else { 0.0 };
        let tol = rank_tolerance(m, n, rmax);
        let rank = if rmax == 0.0 {
            0
        } else {
            (0..k).take_while(|&i| a[(i, i)].abs() > tol).count()
        };
        PivotedQr {
            factors: a,
            tau,
            perm,
            rank,
        }
    }

    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    /// Diagonal of `R`.
    pub(crate) fn diagonal(&self) -> Vec<f64> {
        let k = self.tau.len();
        (0..k).map(|i| self.factors[(i, i)]).collect()
    }

    /// Overwrites `b` with `Q' b`.
    fn q_tr_mul(&self, b: &mut DVector<f64>) {
        let m = self.factors.nrows();
        for (i, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let mut dot = b[i];
            for r in (i + 1)..m {
                dot += self.factors[(r, i)] * b[r];
            }
            let f = t * dot;
            b[i] -= f;
            for r in (i + 1)..m {
                b[r] -= f * self.factors[(r, i)];
            }
        }
    }

    /// Minimum-norm solution of the truncated system.
    pub(crate) fn solve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.factors.ncols();
        let rank = self.rank;
        let mut qty = y.clone();
        self.q_tr_mul(&mut qty);
        let c = qty.rows(0, rank).into_owned();

        let z = if rank == n {
            upper_solve(&self.factors.view((0, 0), (n, n)).into_owned(), &c)?
        } else if rank == 0 {
            DVector::zeros(n)
        } else {
            // [R11 R12]' = Q2 R2, so z = Q2 R2^{-T} c is the shortest solution.
            let trapezoid_t = self
                .factors
                .view((0, 0), (rank, n))
                .upper_triangle()
                .transpose();
            let qr = trapezoid_t.qr();
            let r2 = qr.r();
            let w = lower_solve(&r2.transpose(), &c)?;
            qr.q() * w
        };

        let mut beta = DVector::zeros(n);
        for (k, &col) in self.perm.iter().enumerate() {
            beta[col] = z[k];
        }
        Ok(beta)
    }
}

fn upper_solve(r: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    r.solve_upper_triangular(b)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
}

fn lower_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    l.solve_lower_triangular(b)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
}

pub(crate) fn min_norm_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let qr = PivotedQr::new(x.clone());
    let beta = qr.solve(y)?;
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares solution is not finite".into()));
    }
    Ok((beta, qr.rank()))
}

/// Thin SVD pieces of a full-column-rank design: `X = U diag(s) V'`.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// SVD of a design that must have full column rank.
pub(crate) fn full_rank_svd(x: &DMatrix<f64>) -> Result<ThinSvd> {
    let (n, p) = x.shape();
    let svd = x.clone().svd(true, true);
    let s = svd.singular_values.clone();
    let smax = s.max();
    let tol = rank_tolerance(n, p, smax);
    let rank = s.iter().filter(|&&v| smax > 0.0 && v > tol).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, required: p });
    }
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce V".into()))?;
    Ok(ThinSvd { u, s, v_t })
}
