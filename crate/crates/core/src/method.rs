//! Registry of estimation methods shared by results, the benchmark and the CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::optdesign::Criterion;
use crate::probs::{Scheme, DEFAULT_SLEV_ALPHA};

/// An estimator. The label produced by `Display` parses back to the same value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Least squares on the whole dataset.
    Ols,
    /// Weighted least squares on the whole dataset.
    Wls,
    /// Benchmark control: least squares on the full bootstrap sample.
    Full,
    Rand,
    Blev,
    Slev { alpha: f64 },
    Ic,
    Rl,
    Pl,
    Iboss,
    Greedy(Criterion),
    Exchange(Criterion),
    VolumeStandard,
    VolumeLeveraged,
}

impl Method {
    /// Probability scheme behind a randomized method, with its shrinkage parameter.
    pub fn scheme(&self) -> Option<(Scheme, Option<f64>)> {
        match *self {
            Method::Rand => Some((Scheme::Rand, None)),
            Method::Blev => Some((Scheme::Blev, None)),
            Method::Slev { alpha } => Some((Scheme::Slev, Some(alpha))),
            Method::Ic => Some((Scheme::Ic, None)),
            Method::Rl => Some((Scheme::Rl, None)),
            Method::Pl => Some((Scheme::Pl, None)),
            _ => None,
        }
    }

    pub fn from_scheme(scheme: Scheme, alpha: Option<f64>) -> Method {
        match scheme {
            Scheme::Rand => Method::Rand,
            Scheme::Blev => Method::Blev,
            Scheme::Slev => Method::Slev {
                alpha: alpha.unwrap_or(DEFAULT_SLEV_ALPHA),
            },
            Scheme::Ic => Method::Ic,
            Scheme::Rl => Method::Rl,
            Scheme::Pl => Method::Pl,
        }
    }

    /// The nine methods compared in the benchmark protocol by default.
    pub fn default_benchmark_set() -> Vec<Method> {
        vec![
            Method::Rand,
            Method::Blev,
            Method::Slev {
                alpha: DEFAULT_SLEV_ALPHA,
            },
            Method::Rl,
            Method::Ic,
            Method::Pl,
            Method::Iboss,
            Method::Exchange(Criterion::D),
            Method::Greedy(Criterion::D),
        ]
    }

    /// Stable 64-bit key of the label, used to derive per-method random streams.
    pub(crate) fn stream_key(&self) -> u64 {
        // FNV-1a
        self.to_string().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ols => f.write_str("OLS"),
            Method::Wls => f.write_str("WLS"),
            Method::Full => f.write_str("FULL"),
            Method::Rand => f.write_str("RAND"),
            Method::Blev => f.write_str("BLEV"),
            Method::Slev { alpha } => write!(f, "SLEV:{alpha}"),
            Method::Ic => f.write_str("IC"),
            Method::Rl => f.write_str("RL"),
            Method::Pl => f.write_str("PL"),
            Method::Iboss => f.write_str("IBOSS"),
            Method::Greedy(c) => write!(f, "GREEDY:{c}"),
            Method::Exchange(c) => write!(f, "EXCHANGE:{c}"),
            Method::VolumeStandard => f.write_str("VOLUME"),
            Method::VolumeLeveraged => f.write_str("VOLUME-LEVERAGED"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let no_arg = |m: Method| match arg {
            None => Ok(m),
            Some(_) => Err(Error::invalid(format!("method '{s}' takes no parameter"))),
        };
        let criterion = || -> Result<Criterion, Error> {
            arg.map_or(Ok(Criterion::D), |a| a.parse())
        };
        match name {
            "ols" => no_arg(Method::Ols),
            "wls" => no_arg(Method::Wls),
            "full" => no_arg(Method::Full),
            "rand" | "uniform" => no_arg(Method::Rand),
            "blev" => no_arg(Method::Blev),
            "slev" => {
                let alpha = match arg {
                    None => DEFAULT_SLEV_ALPHA,
                    Some(a) => a
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad SLEV alpha in '{s}'")))?,
                };
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::invalid(format!("SLEV alpha {alpha} outside [0, 1]")));
                }
                Ok(Method::Slev { alpha })
            }
            "ic" => no_arg(Method::Ic),
            "rl" => no_arg(Method::Rl),
            "pl" => no_arg(Method::Pl),
            "iboss" => no_arg(Method::Iboss),
            "greedy" => Ok(Method::Greedy(criterion()?)),
            "exchange" => Ok(Method::Exchange(criterion()?)),
            "volume" | "volume-standard" => no_arg(Method::VolumeStandard),
            "volume-leveraged" => no_arg(Method::VolumeLeveraged),
            _ => Err(Error::invalid(format!("unknown method '{s}'"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}
