use std::path::PathBuf;

use lrep::lattice::{Kernel, KernelSpec, SiteSpace, SpaceSpec};
use lrep::rates::Configuration;
use lrep::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Rates,
    Exact,
    Simulate,
    Couple,
    Acceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Character `i` is site `i`.
    Bitstring(String),
    /// Product measure of this density.
    Bernoulli(f64),
    /// Every configuration with this many particles.
    Shell(usize),
    Pair { eta: String, xi: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    pub mode: RunMode,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Acceptance only: criteria to run (all when absent).
    #[serde(default)]
    pub criteria: Option<Vec<u32>>,
    /// Acceptance only.
    #[serde(default)]
    pub fault_injection: bool,
}

fn default_horizon() -> f64 {
    1.0
}

fn default_replicas() -> usize {
    1
}

/// A validated config with the space and kernel built.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub kernel: Option<Kernel>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))
    }

    pub fn for_acceptance() -> Self {
        ExperimentConfig {
            space: None,
            kernel: None,
            mode: RunMode::Acceptance,
            initial: None,
            horizon: default_horizon(),
            replicas: default_replicas(),
            seed: lrep::acceptance::DEFAULT_SEED,
            output: None,
            criteria: None,
            fault_injection: false,
        }
    }

    /// Checks everything that can be checked before computing.
    pub fn resolve(self) -> Result<Resolved, Error> {
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Invalid(format!("horizon must be finite and >= 0, got {}", self.horizon)));
        }
        if self.mode == RunMode::Acceptance {
            return Ok(Resolved { config: self, kernel: None });
        }
        if self.replicas == 0 && matches!(self.mode, RunMode::Simulate | RunMode::Couple) {
            return Err(Error::Invalid("replicas must be at least 1".into()));
        }
        let space = self.space.as_ref().ok_or_else(|| Error::Invalid("config: missing `space`".into()))?;
        let kernel = self.kernel.as_ref().ok_or_else(|| Error::Invalid("config: missing `kernel`".into()))?;
        let space = SiteSpace::from_spec(space)?;
        let kernel = Kernel::from_spec(&space, kernel)?;
        let initial = self.initial.as_ref().ok_or_else(|| Error::Invalid("config: missing `initial`".into()))?;
        let n = space.len();
        let check_len = |s: &str| -> Result<(), Error> {
            let c = Configuration::from_bitstring(s)?;
            if c.len() != n {
                return Err(Error::Invalid(format!("initial configuration has {} sites, space has {n}", c.len())));
            }
            Ok(())
        };
        match initial {
            InitialSpec::Bitstring(s) => check_len(s)?,
            InitialSpec::Pair { eta, xi } => {
                check_len(eta)?;
                check_len(xi)?;
            }
            InitialSpec::Bernoulli(rho) => {
                if !(0.0..=1.0).contains(rho) {
                    return Err(Error::Invalid(format!("bernoulli density {rho} outside [0, 1]")));
                }
            }
            InitialSpec::Shell(k) => {
                if *k > n {
                    return Err(Error::Invalid(format!("shell {k} exceeds the {n} sites")));
                }
            }
        }
        let pair_mode = matches!(initial, InitialSpec::Pair { .. });
        if self.mode == RunMode::Couple && !pair_mode {
            return Err(Error::Invalid("couple mode needs an initial `pair`".into()));
        }
        if matches!(self.mode, RunMode::Rates | RunMode::Simulate) && pair_mode {
            return Err(Error::Invalid(format!("{:?} mode needs a single configuration, not a pair", self.mode)));
        }
        Ok(Resolved { config: self, kernel: Some(kernel) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let c = ExperimentConfig::parse(
            r#"{"space": {"torus": [3]}, "kernel": {"offsets": [[1, 0.5], [-1, 0.5]]},
                "mode": "exact", "initial": {"shell": 2}}"#,
        )
        .unwrap();
        assert_eq!(c.mode, RunMode::Exact);
        let r = c.resolve().unwrap();
        assert_eq!(r.kernel.unwrap().len(), 3);
    }

    #[test]
    fn rejects_unknown_keys() {
        let e = ExperimentConfig::parse(r#"{"mode": "acceptance", "colour": 1}"#).unwrap_err();
        assert!(e.to_string().contains("colour"));
        let e = ExperimentConfig::parse(r#"{"mode": "rates", "kernel": {"offsets": [[1, 1.0]], "x": 2}}"#);
        assert!(e.is_err());
    }

    #[test]
    fn row_sum_error_names_the_row() {
        let c = ExperimentConfig::parse(
            r#"{"space": {"torus": [2]}, "kernel": {"matrix": [[0, 1], [0.5, 0]]},
                "mode": "rates", "initial": {"bitstring": "10"}}"#,
        )
        .unwrap();
        let e = c.resolve().err().unwrap();
        assert!(e.to_string().contains("row 1"), "{e}");
    }
}
