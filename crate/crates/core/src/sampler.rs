//! Drawing subsamples and fitting on them.
//!
//! Draws are i.i.d. with replacement from the categorical distribution given by
//! a [`ProbabilityVector`], through an alias table built once per vector.
//! A plain fit is ordinary least squares on the drawn rows; a weighted fit uses
//! weights `1 / pi_i` for every drawn row.

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{ols_fit, weighted_ls_fit, Dataset, EstimateResult};
use crate::method::Method;
use crate::probs::ProbabilityVector;
use crate::rng;

/// Rows drawn for one subsample, in draw order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsampleDraw {
    pub indices: Vec<usize>,
    /// Sampling probability of each drawn row.
    pub draw_probs: Vec<f64>,
    pub seed: u64,
    pub with_replacement: bool,
    /// Method implied by the probability vector the rows were drawn from.
    pub method: Method,
}

impl SubsampleDraw {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMode {
    /// Ordinary least squares on the drawn rows.
    Plain,
    /// Least squares weighted by the inverse draw probabilities.
    Weighted,
}

impl std::str::FromStr for EstimateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" => Ok(EstimateMode::Plain),
            "weighted" => Ok(EstimateMode::Weighted),
            other => Err(Error::invalid(format!("unknown estimate mode '{other}'"))),
        }
    }
}

/// Alias table over the rows of a dataset.
#[derive(Debug, Clone)]
pub struct RowSampler {
    table: WeightedAliasIndex<f64>,
    probs: Vec<f64>,
    method: Method,
}

impl RowSampler {
    pub fn new(probs: &ProbabilityVector) -> Result<Self> {
        let table = WeightedAliasIndex::new(probs.probs.clone())
            .map_err(|e| Error::invalid(format!("cannot build alias table: {e}")))?;
        Ok(RowSampler {
            table,
            probs: probs.probs.clone(),
            method: Method::from_scheme(probs.scheme, probs.alpha),
        })
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }

    /// `r` draws from `rng`, recorded against `seed`.
    pub fn draw_from<R: Rng + ?Sized>(&self, r: usize, seed: u64, rng: &mut R) -> Result<SubsampleDraw> {
        if r < 1 {
            return Err(Error::invalid("subsample size r must be at least 1"));
        }
        let indices: Vec<usize> = (0..r).map(|_| self.table.sample(rng)).collect();
        let draw_probs = indices.iter().map(|&i| self.probs[i]).collect();
        Ok(SubsampleDraw {
            indices,
            draw_probs,
            seed,
            with_replacement: true,
            method: self.method,
        })
    }

    pub fn draw(&self, r: usize, seed: u64) -> Result<SubsampleDraw> {
        self.draw_from(r, seed, &mut rng::stream(seed))
    }
}

/// `r` i.i.d. draws with replacement from `probs`; a pure function of its inputs.
pub fn draw(probs: &ProbabilityVector, r: usize, seed: u64) -> Result<SubsampleDraw> {
    if r < 1 {
        return Err(Error::invalid("subsample size r must be at least 1"));
    }
    RowSampler::new(probs)?.draw(r, seed)
}

/// Fits on the drawn rows. A rank-deficient subsample yields the minimum-norm
/// fit with `rank < p` rather than an error.
pub fn subsample_estimate(data: &Dataset, draw: &SubsampleDraw, mode: EstimateMode) -> Result<EstimateResult> {
    if draw.indices.len() != draw.draw_probs.len() {
        return Err(Error::invalid("draw indices and probabilities differ in length"));
    }
    let sub = data.select_rows(&draw.indices)?;
    let mut fit = match mode {
        EstimateMode::Plain => ols_fit(&sub)?,
        EstimateMode::Weighted => {
            if let Some(k) = draw.draw_probs.iter().position(|&q| !(q > 0.0 && q <= 1.0)) {
                return Err(Error::invalid(format!(
                    "draw {k} has probability {} outside (0, 1]",
                    draw.draw_probs[k]
                )));
            }
            let weights: Vec<f64> = draw.draw_probs.iter().map(|q| 1.0 / q).collect();
            weighted_ls_fit(&sub, &weights)?
        }
    };
    fit.method = draw.method;
    Ok(fit)
}
