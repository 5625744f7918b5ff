use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Kernel;
use crate::parallel;
use crate::rates::{Configuration, JumpTable};
use crate::rng;
use crate::simulate::{run_single, RngPlan};

/// `P(U > a)` for `U = Z_1 + ... + Z_{N+1}`, `N ~ Poisson(1)`, `Z_i ~ Exp(1)`.
///
/// `e^{-1} sum_n P(Gamma(n+1) > a) / n!`, with
/// `P(Gamma(n+1) > a) = e^{-a} sum_{j<=n} a^j / j!`.
pub fn compound_tail(a: f64) -> Result<f64> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::invalid(format!("compound tail needs a finite a >= 0, got {a}")));
    }
    let mut total = 0.0;
    let mut inv_fact = 1.0; // 1/n!
    let mut term = 1.0; // a^n / n!
    let mut partial = 0.0; // sum_{j<=n} a^j/j!
    let ea = (-a).exp();
    for n in 0..200usize {
        if n > 0 {
            inv_fact /= n as f64;
            term *= a / n as f64;
        }
        partial += term;
        let gamma_tail = (ea * partial).min(1.0);
        let contrib = inv_fact * gamma_tail;
        total += contrib;
        // the remaining terms are at most sum_{m>n} 1/m!
        if inv_fact / (n as f64 + 1.0) * 2.0 < 1e-16 {
            break;
        }
    }
    Ok((total * (-1.0f64).exp()).min(1.0))
}

/// Grid point of a one-sided tail comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub at: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
}

impl TailRow {
    fn new(at: f64, exceed: usize, total: usize, bound: f64) -> Self {
        let p = exceed as f64 / total as f64;
        TailRow { at, estimate: p, stderr: (p * (1.0 - p) / total as f64).sqrt(), bound }
    }

    /// Below the bound with `sigmas` standard errors of slack. The slack
    /// never drops below one count, so an empirical zero always passes.
    pub fn below(&self, sigmas: f64, total: usize) -> bool {
        self.estimate <= self.bound + sigmas * self.stderr.max(1.0 / total as f64)
    }

    /// Two-sided agreement within `sigmas` standard errors of the bound's
    /// own binomial spread.
    pub fn agrees(&self, sigmas: f64, total: usize) -> bool {
        let se = (self.bound * (1.0 - self.bound) / total as f64).sqrt();
        (self.estimate - self.bound).abs() <= sigmas * se.max(1.0 / total as f64)
    }
}

/// Dense intensity matrix of a small jump process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpProcess {
    rates: Vec<Vec<f64>>,
}

impl JumpProcess {
    /// Off-diagonal rates; diagonal entries are ignored.
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self> {
        let n = rates.len();
        for (i, row) in rates.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("row {i} has length {}", row.len())));
            }
            if let Some(j) = (0..n).find(|&j| j != i && (!(row[j] >= 0.0) || !row[j].is_finite())) {
                return Err(Error::invalid(format!("row {i}: rate to {j} is {}", row[j])));
            }
        }
        Ok(JumpProcess { rates })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn exit_rate(&self, x: usize) -> f64 {
        self.rates[x].iter().enumerate().filter(|(j, _)| *j != x).map(|(_, r)| r).sum()
    }

    /// `Q(x, A)`.
    pub fn rate_into(&self, x: usize, set: &[bool]) -> f64 {
        self.rates[x].iter().enumerate().filter(|(j, _)| *j != x && set[*j]).map(|(_, r)| r).sum()
    }

    /// States from which `set` is reachable.
    fn reaches(&self, set: &[bool]) -> Vec<bool> {
        let n = self.len();
        let mut r = set.to_vec();
        loop {
            let mut changed = false;
            for i in 0..n {
                if !r[i] && (0..n).any(|j| j != i && self.rates[i][j] > 0.0 && r[j]) {
                    r[i] = true;
                    changed = true;
                }
            }
            if !changed {
                return r;
            }
        }
    }

    /// One sample of `int_0^{tau_A} Q(X_s, A) ds` from `start`.
    pub fn sample_integral<R: Rng + ?Sized>(&self, start: usize, set: &[bool], reach: &[bool], rng: &mut R) -> f64 {
        let mut x = start;
        let mut integral = 0.0;
        while !set[x] && reach[x] {
            let q = self.exit_rate(x);
            let hold: f64 = Exp1.sample(rng);
            let hold = hold / q;
            integral += self.rate_into(x, set) * hold;
            let mut u = rng.random::<f64>() * q;
            let mut next = x;
            for (j, &r) in self.rates[x].iter().enumerate() {
                if j == x || r == 0.0 {
                    continue;
                }
                next = j;
                if u < r {
                    break;
                }
                u -= r;
            }
            x = next;
        }
        integral
    }
}

/// Empirical tail of `int_0^{tau_A} Q(X_s, A) ds` against `e^{-t}`.
pub fn lemma31_test(
    process: &JumpProcess,
    start: usize,
    target: &[usize],
    samples: usize,
    grid: &[f64],
    seed: u64,
) -> Result<Vec<TailRow>> {
    let n = process.len();
    let mut set = vec![false; n];
    for &a in target {
        if a >= n {
            return Err(Error::invalid(format!("target state {a} out of range")));
        }
        set[a] = true;
    }
    if start >= n || set[start] {
        return Err(Error::precondition("start must be a state outside the target set"));
    }
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let reach = process.reaches(&set);
    let batches = parallel::batches(samples, 8192);
    let values: Vec<Vec<f64>> = parallel::map_indexed(batches.len(), |b| {
        let (index, _, len) = batches[b];
        let mut r = rng::stream(seed, index as u64);
        (0..len).map(|_| process.sample_integral(start, &set, &reach, &mut r)).collect()
    });
    let values: Vec<f64> = values.into_iter().flatten().collect();
    Ok(grid
        .iter()
        .map(|&t| TailRow::new(t, values.iter().filter(|&&v| v >= t).count(), samples, (-t).exp()))
        .collect())
}

/// `L+ f_x` for every configuration of a small space, indexed by mask.
pub fn gain_table(kernel: &Kernel, x: usize) -> Result<Vec<f64>> {
    let n = kernel.len();
    if n > 20 {
        return Err(Error::TooLarge(format!("gain table over 2^{n} configurations")));
    }
    let values: Vec<Result<f64>> = parallel::map_indexed(1 << n, |m| {
        let eta = Configuration::from_mask(m as u64, n);
        if eta.get(x) {
            return Ok(0.0);
        }
        let t = JumpTable::new(kernel, &eta)?;
        Ok(eta.occupied().flat_map(|y| t.jumps[y].iter().filter(|(s, _)| *s == x).map(|(_, q)| *q)).sum())
    });
    values.into_iter().collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma36Report {
    pub rows: Vec<TailRow>,
    pub replicas: usize,
    pub mean_integral: f64,
}

/// Empirical tail of `int_0^1 L+ f_x(eta_s) ds` from initial states drawn by
/// `initial`, against [`compound_tail`].
pub fn lemma36_test<F>(kernel: &Kernel, x: usize, initial: F, replicas: usize, grid: &[f64], seed: u64) -> Result<Lemma36Report>
where
    F: Fn(&mut rng::StreamRng) -> Configuration + Sync + Send,
{
    let table = gain_table(kernel, x)?;
    let results: Vec<Result<f64>> = parallel::map_indexed(replicas, |i| {
        let s = rng::child_seed(seed, i as u64);
        let mut r = rng::stream(s, u64::MAX);
        let eta0 = initial(&mut r);
        let traj = run_single(kernel, &eta0, 1.0, &RngPlan::new(s))?;
        let mut integral = 0.0;
        traj.for_each_piece(|c, dt| integral += table[c.mask() as usize] * dt);
        Ok(integral)
    });
    let values = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let rows = grid
        .iter()
        .map(|&a| Ok(TailRow::new(a, values.iter().filter(|&&v| v > a).count(), replicas, compound_tail(a)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Lemma36Report { rows, replicas, mean_integral: values.iter().sum::<f64>() / replicas as f64 })
}

/// Bernoulli product sample of density `rho` over `n` sites.
pub fn bernoulli_configuration<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Configuration {
    Configuration::from_bits(&(0..n).map(|_| rng.random::<f64>() < rho).collect::<Vec<_>>())
}

/// One-sided Kolmogorov-Smirnov statistic `sup_t (F_n(t) - F(t))` over
/// `t < cutoff`, with samples censored at `cutoff`.
pub fn ks_excess(samples: &[f64], cdf: impl Fn(f64) -> f64, cutoff: f64) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in s.iter().enumerate() {
        if v >= cutoff {
            break;
        }
        d = d.max((i + 1) as f64 / n - cdf(v));
    }
    d
}

/// One-sided 5% critical value of [`ks_excess`] for `n` samples.
pub fn ks_critical_5pct(n: usize) -> f64 {
    (-(0.05f64).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compound_tail_limits() {
        assert!((compound_tail(0.0).unwrap() - 1.0).abs() < 1e-15);
        let mut prev = 1.0;
        for a in [0.5, 1.0, 2.0, 4.0, 8.0, 30.0] {
            let v = compound_tail(a).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(compound_tail(60.0).unwrap() < 1e-15);
        assert!(compound_tail(-1.0).is_err());
    }

    #[test]
    fn compound_tail_against_gamma_mixture() {
        // P(U > 1) = e^{-1} sum_n (1/n!) e^{-1} sum_{j<=n} 1/j!
        let mut expect = 0.0;
        let mut fact = 1.0;
        for n in 0..30 {
            if n > 0 {
                fact *= n as f64;
            }
            let mut inner = 0.0;
            let mut f = 1.0;
            for j in 0..=n {
                if j > 0 {
                    f *= j as f64;
                }
                inner += 1.0 / f;
            }
            expect += (-1.0f64).exp() * inner / fact;
        }
        expect *= (-1.0f64).exp();
        assert!((compound_tail(1.0).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn constant_rate_integral_is_exponential() {
        let p = JumpProcess::new(vec![vec![0.0, 2.5], vec![1.0, 0.0]]).unwrap();
        let rows = lemma31_test(&p, 0, &[1], 20_000, &[0.0, 0.5, 1.0, 2.0], 11).unwrap();
        assert_eq!(rows[0].estimate, 1.0);
        for r in &rows {
            assert!(r.agrees(4.0, 20_000), "{r:?}");
        }
    }

    #[test]
    fn ks_of_exact_sample() {
        let s: Vec<f64> = (1..=1000).map(|i| -(1.0 - (i as f64 - 0.5) / 1000.0).ln()).collect();
        assert!(ks_excess(&s, |t| 1.0 - (-t).exp(), f64::INFINITY) < ks_critical_5pct(1000));
    }
}
