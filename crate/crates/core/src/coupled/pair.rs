use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::Configuration;

/// Two configurations `(eta, xi)` over one site space.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairConfiguration {
    pub eta: Configuration,
    pub xi: Configuration,
}

impl PairConfiguration {
    pub fn new(eta: Configuration, xi: Configuration) -> Result<Self> {
        if eta.len() != xi.len() {
            return Err(Error::invalid(format!("pair of sizes {} and {}", eta.len(), xi.len())));
        }
        Ok(PairConfiguration { eta, xi })
    }

    pub fn diagonal(eta: Configuration) -> Self {
        PairConfiguration { xi: eta.clone(), eta }
    }

    pub fn from_bitstrings(eta: &str, xi: &str) -> Result<Self> {
        Self::new(Configuration::from_bitstring(eta)?, Configuration::from_bitstring(xi)?)
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.len() == 0
    }

    /// `eta(x) - xi(x)`.
    pub fn discrepancy(&self, x: usize) -> i8 {
        self.eta.get(x) as i8 - self.xi.get(x) as i8
    }

    pub fn product(&self) -> Configuration {
        self.eta.product(&self.xi)
    }

    /// `eta <= xi` or `xi <= eta`.
    pub fn ordered(&self) -> bool {
        self.eta.le(&self.xi) || self.xi.le(&self.eta)
    }

    pub fn positive_count(&self) -> usize {
        (0..self.len()).filter(|&x| self.discrepancy(x) > 0).count()
    }

    pub fn negative_count(&self) -> usize {
        (0..self.len()).filter(|&x| self.discrepancy(x) < 0).count()
    }

    pub fn map(&self, f_eta: impl Fn(&Configuration) -> Configuration, f_xi: impl Fn(&Configuration) -> Configuration) -> Self {
        PairConfiguration { eta: f_eta(&self.eta), xi: f_xi(&self.xi) }
    }

    /// Two bitstrings joined by `/`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.eta, self.xi)
    }
}

impl fmt::Debug for PairConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pair({})", self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrepancies_and_order() {
        let p = PairConfiguration::from_bitstrings("1100", "0110").unwrap();
        assert_eq!((0..4).map(|x| p.discrepancy(x)).collect::<Vec<_>>(), vec![1, 0, -1, 0]);
        assert!(!p.ordered());
        assert_eq!(p.product().to_bitstring(), "0100");
        let q = PairConfiguration::from_bitstrings("0100", "0110").unwrap();
        assert!(q.ordered());
        assert_eq!((p.positive_count(), p.negative_count()), (1, 1));
        assert!(PairConfiguration::from_bitstrings("10", "100").is_err());
    }
}
