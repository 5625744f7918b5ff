use serde::{Deserialize, Serialize};

use super::PairConfiguration;
use crate::error::{Error, Result};
use crate::lattice::SiteSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Marginal {
    Eta,
    Xi,
}

/// `coef * prod_{x in eta} eta(x) * prod_{y in xi} xi(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub coef: f64,
    #[serde(default)]
    pub eta: Vec<usize>,
    #[serde(default)]
    pub xi: Vec<usize>,
}

/// Functions of a pair that the coupled generator can be applied to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PairFunction {
    Constant(f64),
    /// Number of positive discrepancies among `sites`.
    PositiveCount { sites: Vec<usize> },
    /// Number of `+1 -> -1` alternations of the discrepancy field along
    /// `sites`, read in the given order.
    Alternations { sites: Vec<usize> },
    Indicator { marginal: Marginal, site: usize },
    Terms { terms: Vec<PairTerm> },
}

/// Count of `x` in `sites` with `eta(x) > xi(x)`.
pub fn positive_in(pair: &PairConfiguration, sites: &[usize]) -> usize {
    sites.iter().filter(|&&x| pair.discrepancy(x) > 0).count()
}

/// Sign changes from `+1` to `-1` of the discrepancy field along `sites`,
/// zeros skipped.
pub fn alternations(pair: &PairConfiguration, sites: &[usize]) -> usize {
    let mut last = 0i8;
    let mut count = 0;
    for &x in sites {
        let d = pair.discrepancy(x);
        if d != 0 {
            if last > 0 && d < 0 {
                count += 1;
            }
            last = d;
        }
    }
    count
}

impl PairFunction {
    /// `f_n`: positive discrepancies in `[-n, n]`.
    pub fn f_n(space: &SiteSpace, n: usize) -> Result<Self> {
        Ok(PairFunction::PositiveCount { sites: space.window(n)? })
    }

    /// `g_n`: `+ -> -` alternations in `[-n, n]`.
    pub fn g_n(space: &SiteSpace, n: usize) -> Result<Self> {
        Ok(PairFunction::Alternations { sites: space.window(n)? })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |s: usize| -> Result<()> {
            if s >= n {
                Err(Error::invalid(format!("pair function refers to site {s}; the space has {n}")))
            } else {
                Ok(())
            }
        };
        match self {
            PairFunction::Constant(_) => Ok(()),
            PairFunction::PositiveCount { sites } | PairFunction::Alternations { sites } => {
                sites.iter().try_for_each(|&s| bad(s))
            }
            PairFunction::Indicator { site, .. } => bad(*site),
            PairFunction::Terms { terms } => terms.iter().flat_map(|t| t.eta.iter().chain(&t.xi)).try_for_each(|&s| bad(s)),
        }
    }

    pub fn eval(&self, pair: &PairConfiguration) -> f64 {
        match self {
            PairFunction::Constant(c) => *c,
            PairFunction::PositiveCount { sites } => positive_in(pair, sites) as f64,
            PairFunction::Alternations { sites } => alternations(pair, sites) as f64,
            PairFunction::Indicator { marginal, site } => match marginal {
                Marginal::Eta => pair.eta.value(*site),
                Marginal::Xi => pair.xi.value(*site),
            },
            PairFunction::Terms { terms } => terms
                .iter()
                .filter(|t| t.eta.iter().all(|&x| pair.eta.get(x)) && t.xi.iter().all(|&y| pair.xi.get(y)))
                .map(|t| t.coef)
                .sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let p = PairConfiguration::from_bitstrings("1010", "0101").unwrap();
        assert_eq!(alternations(&p, &[0, 1, 2, 3]), 2);
        assert_eq!(positive_in(&p, &[0, 1, 2, 3]), 2);
        let q = PairConfiguration::from_bitstrings("100", "001").unwrap();
        assert_eq!(alternations(&q, &[0, 1, 2]), 1);
        assert_eq!(alternations(&q, &[2, 1, 0]), 0);
    }

    #[test]
    fn terms_and_indicators() {
        let p = PairConfiguration::from_bitstrings("110", "011").unwrap();
        let f = PairFunction::Terms {
            terms: vec![
                PairTerm { coef: 2.0, eta: vec![0, 1], xi: vec![2] },
                PairTerm { coef: 5.0, eta: vec![2], xi: vec![] },
            ],
        };
        assert_eq!(f.eval(&p), 2.0);
        assert_eq!(PairFunction::Indicator { marginal: Marginal::Xi, site: 0 }.eval(&p), 0.0);
        assert!(f.validate(2).is_err());
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<PairFunction>(&json).unwrap(), f);
    }
}
