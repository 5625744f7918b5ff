use serde::Serialize;

use crate::coupled::PairConfiguration;
use crate::error::{Error, Result};
use crate::lattice::Kernel;
use crate::parallel;
use crate::rng::{self, StreamRng};
use crate::simulate::{run_coupled, RngPlan};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderedFraction {
    pub grid: Vec<f64>,
    /// `fraction[i]` estimates `P(ordered by grid[i])`.
    pub fraction: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replicas: usize,
    /// Mean first time the pair is ordered, over runs that got there.
    pub mean_ordering_time: f64,
    pub never_ordered: usize,
    /// Runs that were ordered at some time and unordered later.
    pub order_violations: usize,
}

impl OrderedFraction {
    /// Fraction ordered by the last grid time not after `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.grid.iter().rposition(|&g| g <= t).map(|i| self.fraction[i])
    }
}

/// Runs the coupled process from pairs drawn by `sampler` and records when
/// each run first becomes ordered (`eta <= xi` or `xi <= eta`).
pub fn ordered_fraction<F>(
    kernel: &Kernel,
    sampler: F,
    horizon: f64,
    grid: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<OrderedFraction>
where
    F: Fn(&mut StreamRng) -> PairConfiguration + Sync + Send,
{
    if replicas == 0 {
        return Err(Error::invalid("need at least one replica"));
    }
    if let Some(t) = grid.iter().find(|&&t| !(0.0..=horizon).contains(&t)) {
        return Err(Error::invalid(format!("grid time {t} outside [0, {horizon}]")));
    }
    let runs: Vec<Result<(Option<f64>, bool)>> = parallel::map_indexed(replicas, |i| {
        let s = rng::child_seed(seed, i as u64);
        let pair = sampler(&mut rng::stream(s, u64::MAX));
        let traj = run_coupled(kernel, &pair, horizon, &RngPlan::new(s))?;
        let mut first = None;
        let mut violated = false;
        for (t, eta, xi) in traj.states() {
            let ordered = eta.le(&xi) || xi.le(&eta);
            match (first, ordered) {
                (None, true) => first = Some(t),
                (Some(_), false) => violated = true,
                _ => {}
            }
        }
        Ok((first, violated))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let n = replicas as f64;
    let fraction: Vec<f64> =
        grid.iter().map(|&g| runs.iter().filter(|(f, _)| f.is_some_and(|f| f <= g)).count() as f64 / n).collect();
    let times: Vec<f64> = runs.iter().filter_map(|(f, _)| *f).collect();
    Ok(OrderedFraction {
        grid: grid.to_vec(),
        stderr: fraction.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect(),
        fraction,
        replicas,
        mean_ordering_time: if times.is_empty() { f64::NAN } else { times.iter().sum::<f64>() / times.len() as f64 },
        never_ordered: replicas - times.len(),
        order_violations: runs.iter().filter(|(_, v)| *v).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Offsets, SiteSpace};
    use crate::rates::Configuration;

    fn ring(n: usize) -> Kernel {
        Kernel::from_offsets(&SiteSpace::ring(n).unwrap(), &Offsets::nearest_neighbor(0.7).unwrap()).unwrap()
    }

    #[test]
    fn identical_pair_is_ordered_at_zero() {
        let k = ring(6);
        let eta = Configuration::from_bitstring("101100").unwrap();
        let r = ordered_fraction(&k, |_| PairConfiguration::diagonal(eta.clone()), 5.0, &[0.0, 5.0], 50, 3).unwrap();
        assert_eq!(r.fraction, vec![1.0, 1.0]);
        assert_eq!(r.mean_ordering_time, 0.0);
    }

    #[test]
    fn full_over_empty_stays_ordered() {
        let k = ring(6);
        let pair = PairConfiguration::new(Configuration::full(6), Configuration::empty(6)).unwrap();
        let r = ordered_fraction(&k, |_| pair.clone(), 10.0, &[0.0], 50, 4).unwrap();
        assert_eq!(r.fraction, vec![1.0]);
        assert_eq!(r.order_violations, 0);
    }

    #[test]
    fn opposite_discrepancies_annihilate() {
        let k = ring(8);
        let pair = PairConfiguration::from_bitstrings("11010000", "01110000").unwrap();
        let r = ordered_fraction(&k, |_| pair.clone(), 100.0, &[0.0, 100.0], 200, 5).unwrap();
        assert_eq!(r.fraction[0], 0.0);
        assert!(r.fraction[1] > 0.95, "{r:?}");
        assert_eq!(r.order_violations, 0);
    }
}
