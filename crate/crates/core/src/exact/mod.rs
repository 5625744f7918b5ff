//! Finite continuous-time chains: generators over enumerated states,
//! stationary measures per closed class, `e^{tQ}` by uniformization, and
//! invariance checks.

mod generator;

use std::fmt::Write;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

pub use generator::{build_generator, GeneratorMatrix, Mode, MAX_COUPLED_SITES, MAX_SINGLE_SITES};

use crate::coupled::alternations;
use crate::error::{Error, Result};
use crate::lattice::Kernel;
use crate::rates::{generator_from_table, CylinderSet, JumpTable};

/// Closed classes up to this size are solved densely.
pub const DENSE_STATES: usize = 4096;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000_000;
/// Residual above which a stationary solve is reported as failed.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Probability vector over the states of a [`GeneratorMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measure {
    pub probs: Vec<f64>,
}

impl Measure {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(*p >= -1e-15) || !p.is_finite()) {
            return Err(Error::invalid("measure has a negative or non-finite entry"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("measure sums to {s}, not 1")));
        }
        Ok(Measure { probs })
    }

    pub fn point_mass(q: &GeneratorMatrix, i: usize) -> Self {
        let mut probs = vec![0.0; q.len()];
        probs[i] = 1.0;
        Measure { probs }
    }

    /// Bernoulli product measure of density `rho`; needs the full state list.
    pub fn bernoulli(q: &GeneratorMatrix, rho: f64) -> Result<Self> {
        if q.mode() != Mode::Single || q.len() != 1 << q.sites() {
            return Err(Error::precondition("Bernoulli measures need the full single-process state list"));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(format!("density {rho} outside [0, 1]")));
        }
        let n = q.sites() as i32;
        let probs = (0..q.len())
            .map(|i| {
                let k = q.configuration(i).count() as i32;
                rho.powi(k) * (1.0 - rho).powi(n - k)
            })
            .collect();
        Ok(Measure { probs })
    }

    /// Uniform measure on the configurations with `k` particles.
    pub fn uniform_on_shell(q: &GeneratorMatrix, k: usize) -> Result<Self> {
        if q.mode() != Mode::Single {
            return Err(Error::precondition("shell measures live on single-process state lists"));
        }
        let members: Vec<usize> = (0..q.len()).filter(|&i| q.configuration(i).count() == k).collect();
        if members.is_empty() {
            return Err(Error::invalid(format!("no enumerated state has {k} particles")));
        }
        let mut probs = vec![0.0; q.len()];
        for i in &members {
            probs[*i] = 1.0 / members.len() as f64;
        }
        Ok(Measure { probs })
    }

    /// `state,probability` lines.
    pub fn to_csv(&self, q: &GeneratorMatrix) -> String {
        let mut s = String::from("state,probability\n");
        for (i, p) in self.probs.iter().enumerate() {
            writeln!(s, "{},{:.17e}", q.label(i), p).unwrap();
        }
        s
    }

    /// `sum_i mu_i f(i)`.
    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs.iter().enumerate().filter(|(_, p)| **p != 0.0).map(|(i, p)| p * f(i)).sum()
    }
}

/// Stationary measure of one closed communicating class.
#[derive(Debug, Clone, Serialize)]
pub struct ClassMeasure {
    pub states: Vec<usize>,
    pub measure: Measure,
    pub residual: f64,
}

/// Communicating classes of the support graph that no transition leaves.
pub fn closed_classes(q: &GeneratorMatrix) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(q.len(), 0);
    let nodes: Vec<_> = (0..q.len()).map(|_| g.add_node(())).collect();
    for i in 0..q.len() {
        for &(j, _) in q.row(i) {
            g.add_edge(nodes[i], nodes[j], ());
        }
    }
    let mut comp = vec![usize::MAX; q.len()];
    let sccs = tarjan_scc(&g);
    for (c, scc) in sccs.iter().enumerate() {
        for n in scc {
            comp[n.index()] = c;
        }
    }
    let mut out: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| scc.iter().all(|n| q.row(n.index()).iter().all(|&(j, _)| comp[j] == *c)))
        .map(|(_, scc)| {
            let mut v: Vec<usize> = scc.iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    out.sort();
    out
}

fn class_dense(q: &GeneratorMatrix, class: &[usize]) -> Result<Vec<f64>> {
    let m = class.len();
    let mut pos = vec![usize::MAX; q.len()];
    for (k, &i) in class.iter().enumerate() {
        pos[i] = k;
    }
    // pi Q_C = 0 with the last equation replaced by normalisation
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (k, &i) in class.iter().enumerate() {
        a[(k, k)] += q.diagonal(i);
        for &(j, r) in q.row(i) {
            a[(pos[j], k)] += r;
        }
    }
    for k in 0..m {
        a[(m - 1, k)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical { what: "singular stationary system".into(), residual: f64::INFINITY })?;
    Ok(x.iter().copied().collect())
}

fn class_power(q: &GeneratorMatrix, class: &[usize]) -> Result<Vec<f64>> {
    let m = class.len();
    let mut pos = vec![usize::MAX; q.len()];
    for (k, &i) in class.iter().enumerate() {
        pos[i] = k;
    }
    let lambda = class.iter().map(|&i| -q.diagonal(i)).fold(0.0, f64::max) * 1.05;
    let mut v = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    for _ in 0..POWER_MAX_ITER {
        for (k, &i) in class.iter().enumerate() {
            next[k] = v[k] * (1.0 + q.diagonal(i) / lambda);
        }
        for (k, &i) in class.iter().enumerate() {
            for &(j, r) in q.row(i) {
                next[pos[j]] += v[k] * r / lambda;
            }
        }
        let delta: f64 = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut v, &mut next);
        if delta < POWER_TOL {
            return Ok(v);
        }
    }
    Err(Error::Numerical { what: "power iteration did not converge".into(), residual: f64::NAN })
}

/// One stationary measure per closed class.
pub fn stationary(q: &GeneratorMatrix) -> Result<Vec<ClassMeasure>> {
    let mut out = Vec::new();
    for class in closed_classes(q) {
        let local = if class.len() <= DENSE_STATES { class_dense(q, &class)? } else { class_power(q, &class)? };
        let mut probs = vec![0.0; q.len()];
        let total: f64 = local.iter().sum();
        for (k, &i) in class.iter().enumerate() {
            probs[i] = (local[k] / total).max(0.0);
        }
        let residual = norm_inf(&q.left_apply(&probs));
        if residual > STATIONARY_TOL {
            return Err(Error::Numerical { what: "stationary solve".into(), residual });
        }
        out.push(ClassMeasure { states: class, measure: Measure { probs }, residual });
    }
    Ok(out)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Poisson truncation tolerance of [`transition_row`].
pub const UNIFORMIZATION_TOL: f64 = 1e-12;
const MAX_TRUNCATION: usize = 50_000_000;

/// `Lambda t` and the Poisson weights of the uniformized chain, truncated
/// where the remaining tail is below `tol`.
fn poisson_weights(lt: f64, tol: f64, min_terms: usize) -> Result<Vec<f64>> {
    let mut w = Vec::new();
    let mut log_w = -lt;
    let mut acc = 0.0;
    let mut k = 0usize;
    loop {
        if k > 0 {
            log_w += lt.ln() - (k as f64).ln();
        }
        let wk = log_w.exp();
        w.push(wk);
        acc += wk;
        k += 1;
        // past the mode the tail is below w_k / (1 - lt/(k+1))
        if k > min_terms && (k as f64) > lt + 1.0 {
            let ratio = lt / (k as f64 + 1.0);
            let tail = wk * ratio / (1.0 - ratio);
            if tail < tol && (1.0 - acc) < tol.max(1e-14 * k as f64) {
                break;
            }
        }
        if k > MAX_TRUNCATION {
            return Err(Error::TooLarge(format!("uniformization needs more than {MAX_TRUNCATION} terms at Lambda t = {lt}")));
        }
    }
    Ok(w)
}

/// Row `from` of `e^{tQ}` by uniformization.
pub fn transition_row(q: &GeneratorMatrix, from: usize, t: f64) -> Result<Vec<f64>> {
    transition_row_with(q, from, t, UNIFORMIZATION_TOL, 0).map(|(row, _)| row)
}

/// As [`transition_row`], with an explicit tolerance and minimum number of
/// Poisson terms; also returns the number of terms used.
pub fn transition_row_with(q: &GeneratorMatrix, from: usize, t: f64, tol: f64, min_terms: usize) -> Result<(Vec<f64>, usize)> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("time {t} must be finite and nonnegative")));
    }
    let mut v = vec![0.0; q.len()];
    v[from] = 1.0;
    let lambda = q.max_exit_rate();
    if t == 0.0 || lambda == 0.0 {
        return Ok((v, 1));
    }
    let weights = poisson_weights(lambda * t, tol, min_terms)?;
    let mut out = vec![0.0; q.len()];
    for (k, &w) in weights.iter().enumerate() {
        if k > 0 {
            let qv = q.left_apply(&v);
            for (a, b) in v.iter_mut().zip(qv) {
                *a += b / lambda;
            }
        }
        if w > 0.0 {
            for (o, a) in out.iter_mut().zip(&v) {
                *o += w * a;
            }
        }
    }
    Ok((out, weights.len()))
}

/// Dense `e^{tQ}`.
pub fn transition_probabilities(q: &GeneratorMatrix, t: f64) -> Result<Vec<Vec<f64>>> {
    (0..q.len()).map(|i| transition_row(q, i, t)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderIntegral {
    pub sites: Vec<usize>,
    pub integral: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    /// `|| mu Q ||_inf`.
    pub residual: f64,
    pub cylinders: Vec<CylinderIntegral>,
    pub max_cylinder: f64,
}

/// `|| mu Q ||` and `sum_eta mu(eta) L f_R(eta)` for every `R` of at most
/// `max_size` sites, the latter evaluated from the rate formula rather than
/// from `Q`.
pub fn invariance_report(kernel: &Kernel, q: &GeneratorMatrix, mu: &Measure, max_size: usize) -> Result<InvarianceReport> {
    if q.mode() != Mode::Single {
        return Err(Error::precondition("cylinder integrals need a single-process generator"));
    }
    if mu.probs.len() != q.len() {
        return Err(Error::invalid("measure and generator have different state lists"));
    }
    let residual = norm_inf(&q.left_apply(&mu.probs));
    let sets = CylinderSet::all_up_to(q.sites(), max_size);
    let support: Vec<usize> = (0..q.len()).filter(|&i| mu.probs[i] != 0.0).collect();
    let tables = support
        .iter()
        .map(|&i| JumpTable::new(kernel, &q.configuration(i)))
        .collect::<Result<Vec<_>>>()?;
    let confs: Vec<_> = support.iter().map(|&i| q.configuration(i)).collect();
    let mut cylinders = Vec::with_capacity(sets.len());
    for r in sets {
        let integral = support
            .iter()
            .enumerate()
            .map(|(k, &i)| mu.probs[i] * generator_from_table(&tables[k], &r, &confs[k]).total())
            .sum();
        cylinders.push(CylinderIntegral { sites: r.sites().to_vec(), integral });
    }
    let max_cylinder = cylinders.iter().map(|c| c.integral.abs()).fold(0.0, f64::max);
    Ok(InvarianceReport { residual, cylinders, max_cylinder })
}

/// Probability that the chain started at `from` ever enters `target`.
pub fn hitting_probability(q: &GeneratorMatrix, from: usize, target: &[bool]) -> Result<f64> {
    if target[from] {
        return Ok(1.0);
    }
    // states that can reach the target
    let n = q.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, _) in q.row(i) {
            rev[j].push(i);
        }
    }
    let mut reach = target.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&i| target[i]).collect();
    while let Some(j) = stack.pop() {
        for &i in &rev[j] {
            if !reach[i] {
                reach[i] = true;
                stack.push(i);
            }
        }
    }
    if !reach[from] {
        return Ok(0.0);
    }
    let unknown: Vec<usize> = (0..n).filter(|&i| reach[i] && !target[i]).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in unknown.iter().enumerate() {
        pos[i] = k;
    }
    let m = unknown.len();
    if m > DENSE_STATES {
        return Err(Error::TooLarge(format!("{m} transient states exceed the dense limit")));
    }
    // sum_j Q(i,j) h(j) = 0 on unknown states, h = 1 on the target
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (k, &i) in unknown.iter().enumerate() {
        a[(k, k)] = q.diagonal(i);
        for &(j, r) in q.row(i) {
            if target[j] {
                b[k] -= r;
            } else if reach[j] {
                a[(k, pos[j])] += r;
            }
        }
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical { what: "singular hitting system".into(), residual: f64::INFINITY })?;
    Ok(h[pos[from]].clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassOrdering {
    pub states: usize,
    /// Stationary mass of pairs that are not ordered.
    pub unordered_mass: f64,
    /// Mass of pairs with a positive and a negative discrepancy at sites
    /// joined by the kernel.
    pub adjacent_opposite_mass: f64,
    /// Mass of pairs with at least two `+ -> -` alternations read along the
    /// sites in index order.
    pub alternations_ge2_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderedAbsorptionReport {
    pub classes: Vec<ClassOrdering>,
    /// No transition leads from an ordered pair to an unordered one.
    pub ordered_set_closed: bool,
    pub closure_violations: usize,
}

pub fn ordered_absorption_report(kernel: &Kernel, q: &GeneratorMatrix) -> Result<OrderedAbsorptionReport> {
    if q.mode() != Mode::Coupled {
        return Err(Error::precondition("ordered absorption needs a coupled generator"));
    }
    let ordered: Vec<bool> = (0..q.len()).map(|i| q.pair(i).ordered()).collect();
    let closure_violations = (0..q.len())
        .filter(|&i| ordered[i])
        .map(|i| q.row(i).iter().filter(|&&(j, _)| !ordered[j]).count())
        .sum();
    let order: Vec<usize> = (0..q.sites()).collect();
    let adjacent_opposite = |i: usize| -> bool {
        let p = q.pair(i);
        (0..p.len()).any(|x| {
            p.discrepancy(x) > 0
                && kernel.row(x).iter().any(|&(y, _)| p.discrepancy(y) < 0)
                || p.discrepancy(x) < 0 && kernel.row(x).iter().any(|&(y, _)| p.discrepancy(y) > 0)
        })
    };
    let mut classes = Vec::new();
    for c in stationary(q)? {
        let mu = &c.measure;
        classes.push(ClassOrdering {
            states: c.states.len(),
            unordered_mass: mu.expect(|i| if ordered[i] { 0.0 } else { 1.0 }),
            adjacent_opposite_mass: mu.expect(|i| if adjacent_opposite(i) { 1.0 } else { 0.0 }),
            alternations_ge2_mass: mu.expect(|i| if alternations(&q.pair(i), &order) >= 2 { 1.0 } else { 0.0 }),
        });
    }
    Ok(OrderedAbsorptionReport { classes, ordered_set_closed: closure_violations == 0, closure_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Offsets, SiteSpace};

    fn ring(n: usize, steps: &[(i64, f64)]) -> Kernel {
        Kernel::from_offsets(&SiteSpace::ring(n).unwrap(), &Offsets::one_dim(steps).unwrap()).unwrap()
    }

    #[test]
    fn tasep_ring_two_particles_is_uniform() {
        let k = ring(3, &[(1, 1.0)]);
        let q = build_generator(&k, Mode::Single, Some(&[2])).unwrap();
        let st = stationary(&q).unwrap();
        assert_eq!(st.len(), 1);
        for p in &st[0].measure.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_state_transition_closed_form() {
        let k = ring(2, &[(1, 0.5), (-1, 0.5)]);
        let q = build_generator(&k, Mode::Single, Some(&[1])).unwrap();
        for t in [0.0, 0.3, 1.0, 4.0] {
            let row = transition_row(&q, 0, t).unwrap();
            let e = (-2.0 * t).exp();
            assert!((row[0] - 0.5 * (1.0 + e)).abs() < 1e-12);
            assert!((row[1] - 0.5 * (1.0 - e)).abs() < 1e-12);
        }
        let st = stationary(&q).unwrap();
        assert!((st[0].measure.probs[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn long_times_approach_stationarity() {
        let k = ring(3, &[(1, 0.7), (-1, 0.3)]);
        let q = build_generator(&k, Mode::Single, Some(&[1])).unwrap();
        let row = transition_row(&q, 0, 50.0).unwrap();
        let st = stationary(&q).unwrap();
        for (a, b) in row.iter().zip(&st[0].measure.probs) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn large_uniformization_parameter() {
        let weights = poisson_weights(2000.0, 1e-12, 0).unwrap();
        let s: f64 = weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-10, "{s}");
    }

    #[test]
    fn full_configuration_is_absorbing() {
        let k = ring(4, &[(1, 0.7), (-1, 0.3)]);
        let q = build_generator(&k, Mode::Single, None).unwrap();
        let classes = closed_classes(&q);
        assert_eq!(classes.len(), 5);
        let full = q.find("1111").unwrap();
        let mu = Measure::point_mass(&q, full);
        assert_eq!(invariance_report(&k, &q, &mu, 2).unwrap().residual, 0.0);
    }

    #[test]
    fn measures_validate() {
        assert!(Measure::new(vec![0.5, 0.6]).is_err());
        let k = ring(3, &[(1, 0.5), (-1, 0.5)]);
        let q = build_generator(&k, Mode::Single, None).unwrap();
        let b = Measure::bernoulli(&q, 0.3).unwrap();
        assert!((b.probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let u = Measure::uniform_on_shell(&q, 1).unwrap();
        assert!(u.to_csv(&q).starts_with("state,probability\n000,0"));
    }

    #[test]
    fn hitting_the_ordered_set() {
        let k = ring(4, &[(1, 0.7), (-1, 0.3)]);
        let q = build_generator(&k, Mode::Coupled, None).unwrap();
        let ordered: Vec<bool> = (0..q.len()).map(|i| q.pair(i).ordered()).collect();
        let start = q.find("1000/0100").unwrap();
        let h = hitting_probability(&q, start, &ordered).unwrap();
        assert!((h - 1.0).abs() < 1e-10, "{h}");
    }
}
