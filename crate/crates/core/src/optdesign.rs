//! Deterministic subset selection by optimality criteria on `(X*'X*)^{-1}`.
//!
//! Three selectors are provided:
//!
//! * [`iboss_select`] takes, column by column, the rows holding the smallest
//!   and largest values among rows not yet taken, `r / (2p)` of each.
//! * [`greedy_select`] seeds `p` rows by maximal orthogonal residual and then
//!   adds one row at a time, always the row that most improves the criterion.
//! * [`exchange_improve`] repeatedly applies the best single swap between the
//!   subset and its complement until no swap improves the criterion.
//!
//! Ties are broken towards the lowest row index everywhere.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{rank_tolerance, Dataset, PivotedQr};

/// Relative decrease a swap must achieve to be accepted.
const EXCHANGE_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    /// Trace of `(X*'X*)^{-1}`.
    A,
    /// Determinant of `(X*'X*)^{-1}`.
    D,
    /// Largest eigenvalue of `(X*'X*)^{-1}`.
    E,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::A, Criterion::D, Criterion::E];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::A => "A",
            Criterion::D => "D",
            Criterion::E => "E",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Criterion::A),
            "D" => Ok(Criterion::D),
            "E" => Ok(Criterion::E),
            other => Err(Error::invalid(format!("unknown optimality criterion '{other}'"))),
        }
    }
}

/// What a selection was optimized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    A,
    D,
    E,
    #[serde(rename = "IBOSS")]
    Iboss,
}

impl SelectionRule {
    /// Criterion used to score the subset. IBOSS subsets are scored by D.
    pub fn criterion(self) -> Criterion {
        match self {
            SelectionRule::A => Criterion::A,
            SelectionRule::D | SelectionRule::Iboss => Criterion::D,
            SelectionRule::E => Criterion::E,
        }
    }
}

impl From<Criterion> for SelectionRule {
    fn from(c: Criterion) -> Self {
        match c {
            Criterion::A => SelectionRule::A,
            Criterion::D => SelectionRule::D,
            Criterion::E => SelectionRule::E,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetSelection {
    /// Distinct row indices in ascending order.
    pub indices: Vec<usize>,
    pub criterion: SelectionRule,
    /// Criterion value of the subset; infinite when its design is rank-deficient.
    pub value: f64,
}

/// Trace, determinant or largest eigenvalue of `(X*'X*)^{-1}` for the rows `indices`.
///
/// A rank-deficient subset is reported as [`Error::RankDeficient`], which is
/// distinct from a finite design whose criterion overflows to `+inf`.
pub fn criterion_value(data: &Dataset, indices: &[usize], criterion: Criterion) -> Result<f64> {
    let p = data.p();
    if indices.len() < p {
        return Err(Error::invalid(format!(
            "need at least p = {p} rows to evaluate a criterion, got {}",
            indices.len()
        )));
    }
    let sub = data.select_rows(indices)?;
    let x = sub.design();
    let sv = x.singular_values();
    let smax = sv.max();
    let tol = rank_tolerance(x.nrows(), p, smax);
    let rank = sv.iter().filter(|&&s| smax > 0.0 && s > tol).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, required: p });
    }
    let value = match criterion {
        Criterion::A => sv.iter().map(|s| 1.0 / (s * s)).sum(),
        Criterion::E => {
            let smin = sv.min();
            1.0 / (smin * smin)
        }
        Criterion::D => {
            // det(X'X) = prod R_kk^2 from the triangular factor.
            let qr = PivotedQr::new(x.clone());
            let logdet: f64 = qr.diagonal().iter().map(|r| 2.0 * r.abs().ln()).sum();
            (-logdet).exp()
        }
    };
    Ok(value)
}

fn score(data: &Dataset, indices: &[usize], rule: SelectionRule) -> f64 {
    criterion_value(data, indices, rule.criterion()).unwrap_or(f64::INFINITY)
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn check_size(data: &Dataset, r: usize) -> Result<()> {
    if r > data.n() {
        return Err(Error::invalid(format!(
            "subset size r = {r} exceeds n = {}",
            data.n()
        )));
    }
    if r < data.p() {
        return Err(Error::invalid(format!(
            "subset size r = {r} is below p = {}",
            data.p()
        )));
    }
    Ok(())
}

/// Per-column extremes: for each column in order, the `r/(2p)` untaken rows
/// with the smallest values, then the `r/(2p)` untaken rows with the largest.
pub fn iboss_select(data: &Dataset, r: usize) -> Result<SubsetSelection> {
    let p = data.p();
    if r < 2 * p || r % (2 * p) != 0 {
        return Err(Error::invalid(format!(
            "IBOSS needs r to be a positive multiple of 2p = {}, got {r}",
            2 * p
        )));
    }
    iboss_balanced(data, r)
}

/// IBOSS for any `p <= r <= n`. Each of the `2p` column ends gets `r / (2p)`
/// rows and the remainder is handed out one row at a time in processing order
/// (column 0 low, column 0 high, column 1 low, ...). Agrees with
/// [`iboss_select`] whenever `r` is a multiple of `2p`.
pub fn iboss_balanced(data: &Dataset, r: usize) -> Result<SubsetSelection> {
    let (n, p) = (data.n(), data.p());
    if r > n {
        return Err(Error::invalid(format!("subset size r = {r} exceeds n = {n}")));
    }
    if r == 0 {
        return Err(Error::invalid("subset size r must be positive"));
    }
    let base = r / (2 * p);
    let extra = r % (2 * p);
    let quota = |slot: usize| base + usize::from(slot < extra);
    let x = data.design();
    let mut taken = vec![false; n];
    let mut chosen = Vec::with_capacity(r);

    for j in 0..p {
        let mut candidates: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        candidates.sort_by(|&a, &b| x[(a, j)].total_cmp(&x[(b, j)]).then(a.cmp(&b)));
        for &i in candidates.iter().take(quota(2 * j)) {
            taken[i] = true;
            chosen.push(i);
        }
        let mut remaining: Vec<usize> = candidates.into_iter().filter(|&i| !taken[i]).collect();
        remaining.sort_by(|&a, &b| x[(b, j)].total_cmp(&x[(a, j)]).then(a.cmp(&b)));
        for &i in remaining.iter().take(quota(2 * j + 1)) {
            taken[i] = true;
            chosen.push(i);
        }
    }

    let indices = sorted(chosen);
    let value = score(data, &indices, SelectionRule::Iboss);
    Ok(SubsetSelection {
        indices,
        criterion: SelectionRule::Iboss,
        value,
    })
}

/// `p` rows spanning the column space: largest norm first, then repeatedly the
/// row with the largest component orthogonal to the rows already chosen.
fn residual_seed(data: &Dataset) -> Result<Vec<usize>> {
    let (n, p) = (data.n(), data.p());
    let mut residuals: Vec<DVector<f64>> = (0..n).map(|i| data.row(i)).collect();
    let max_norm2 = residuals.iter().map(|v| v.norm_squared()).fold(0.0, f64::max);
    let tol = (rank_tolerance(n, p, max_norm2.sqrt())).powi(2).max(f64::MIN_POSITIVE);
    let mut taken = vec![false; n];
    let mut seed = Vec::with_capacity(p);

    for step in 0..p {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let norm2 = residuals[i].norm_squared();
            if best.map_or(true, |(_, b)| norm2 > b) {
                best = Some((i, norm2));
            }
        }
        let (pick, norm2) = best.ok_or_else(|| Error::invalid("not enough rows to seed"))?;
        if norm2 <= tol {
            return Err(Error::RankDeficient {
                rank: step,
                required: p,
            });
        }
        taken[pick] = true;
        seed.push(pick);
        let q = &residuals[pick] / norm2.sqrt();
        for (i, res) in residuals.iter_mut().enumerate() {
            if !taken[i] {
                let c = res.dot(&q);
                res.axpy(-c, &q, 1.0);
            }
        }
    }
    Ok(seed)
}

fn gram(data: &Dataset, indices: &[usize]) -> DMatrix<f64> {
    let p = data.p();
    let mut g = DMatrix::zeros(p, p);
    for &i in indices {
        let x = data.row(i);
        g.ger(1.0, &x, &x, 1.0);
    }
    g
}

/// Criterion of `G^{-1}` for a small Gram matrix; `+inf` when `G` is singular.
fn gram_criterion(g: &DMatrix<f64>, criterion: Criterion) -> f64 {
    let eig = SymmetricEigen::new(g.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmax > 0.0) || lmin <= lmax * g.nrows() as f64 * f64::EPSILON * 8.0 {
        return f64::INFINITY;
    }
    match criterion {
        Criterion::A => eig.eigenvalues.iter().map(|l| 1.0 / l).sum(),
        Criterion::E => 1.0 / lmin,
        Criterion::D => match g.clone().cholesky() {
            Some(ch) => {
                let logdet: f64 = ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
                (-logdet).exp()
            }
            None => f64::INFINITY,
        },
    }
}

/// Greedy forward selection of `r` rows for `criterion`.
pub fn greedy_select(data: &Dataset, r: usize, criterion: Criterion) -> Result<SubsetSelection> {
    check_size(data, r)?;
    let n = data.n();
    let seed = residual_seed(data)?;
    let mut taken = vec![false; n];
    for &i in &seed {
        taken[i] = true;
    }
    let mut chosen = seed;
    let mut g = gram(data, &chosen);

    while chosen.len() < r {
        let pick = match criterion {
            // det(G + xx') = det(G) (1 + x'G^{-1}x)
            Criterion::D => {
                let g_inv = g
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("Gram matrix lost definiteness".into()))?
                    .inverse();
                let mut best: Option<(usize, f64)> = None;
                for i in (0..n).filter(|&i| !taken[i]) {
                    let x = data.row(i);
                    let gain = x.dot(&(&g_inv * &x));
                    if best.map_or(true, |(_, b)| gain > b) {
                        best = Some((i, gain));
                    }
                }
                best.map(|(i, _)| i)
            }
            Criterion::A | Criterion::E => {
                let mut best: Option<(usize, f64)> = None;
                for i in (0..n).filter(|&i| !taken[i]) {
                    let x = data.row(i);
                    let mut cand = g.clone();
                    cand.ger(1.0, &x, &x, 1.0);
                    let v = gram_criterion(&cand, criterion);
                    if best.map_or(true, |(_, b)| v < b) {
                        best = Some((i, v));
                    }
                }
                best.map(|(i, _)| i)
            }
        };
        let i = pick.ok_or_else(|| Error::invalid("ran out of rows while augmenting"))?;
        taken[i] = true;
        chosen.push(i);
        let x = data.row(i);
        g.ger(1.0, &x, &x, 1.0);
    }

    let indices = sorted(chosen);
    let rule = SelectionRule::from(criterion);
    let value = criterion_value(data, &indices, criterion)?;
    Ok(SubsetSelection {
        indices,
        criterion: rule,
        value,
    })
}

/// Best-swap exchange until no single swap lowers the criterion by a relative `1e-10`.
pub fn exchange_improve(data: &Dataset, selection: &SubsetSelection) -> Result<SubsetSelection> {
    let n = data.n();
    let criterion = selection.criterion.criterion();
    let mut current = selection.indices.clone();
    current.sort_unstable();
    if current.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("selection contains repeated rows"));
    }
    if let Some(&bad) = current.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("row index {bad} out of range for n = {n}")));
    }
    let mut value = criterion_value(data, &current, criterion)?;
    let mut inside = vec![false; n];
    for &i in &current {
        inside[i] = true;
    }
    let rows: Vec<DVector<f64>> = (0..n).map(|i| data.row(i)).collect();

    loop {
        let g = gram(data, &current);
        let mut best: Option<(usize, usize, f64)> = None;

        match criterion {
            Criterion::D => {
                // det(G - x_i x_i' + x_j x_j') / det(G) = (1 - d_i)(1 + d_j) + d_ij^2
                let g_inv = match g.clone().cholesky() {
                    Some(ch) => ch.inverse(),
                    None => break,
                };
                let projected: Vec<DVector<f64>> = rows.iter().map(|x| &g_inv * x).collect();
                for (slot, &i) in current.iter().enumerate() {
                    let d_i = rows[i].dot(&projected[i]);
                    for j in (0..n).filter(|&j| !inside[j]) {
                        let d_j = rows[j].dot(&projected[j]);
                        let d_ij = rows[i].dot(&projected[j]);
                        let ratio = (1.0 - d_i) * (1.0 + d_j) + d_ij * d_ij;
                        if ratio > 0.0 {
                            let v = value / ratio;
                            if best.map_or(true, |(_, _, b)| v < b) {
                                best = Some((slot, j, v));
                            }
                        }
                    }
                }
            }
            Criterion::A | Criterion::E => {
                for (slot, &i) in current.iter().enumerate() {
                    let mut without = g.clone();
                    without.ger(-1.0, &rows[i], &rows[i], 1.0);
                    for j in (0..n).filter(|&j| !inside[j]) {
                        let mut cand = without.clone();
                        cand.ger(1.0, &rows[j], &rows[j], 1.0);
                        let v = gram_criterion(&cand, criterion);
                        if best.map_or(true, |(_, _, b)| v < b) {
                            best = Some((slot, j, v));
                        }
                    }
                }
            }
        }

        let Some((slot, j, predicted)) = best else {
            break;
        };
        if !(predicted < value * (1.0 - EXCHANGE_REL_TOL)) {
            break;
        }
        let mut next = current.clone();
        let out = next[slot];
        next[slot] = j;
        next.sort_unstable();
        // Confirm with the exact evaluator so rounding in the update cannot cycle.
        let exact = match criterion_value(data, &next, criterion) {
            Ok(v) => v,
            Err(_) => break,
        };
        if !(exact < value * (1.0 - EXCHANGE_REL_TOL)) {
            break;
        }
        inside[out] = false;
        inside[j] = true;
        current = next;
        value = exact;
    }

    Ok(SubsetSelection {
        indices: current,
        criterion: SelectionRule::from(criterion),
        value,
    })
}
