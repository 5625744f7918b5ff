//! Exact jump rates of the single process and its generator on cylinder
//! functions.
//!
//! Every rate is a first-passage probability of the auxiliary chain and is
//! obtained from one absorbing solve.

mod config;

use serde::Serialize;

pub use config::{Configuration, CylinderSet};

use crate::error::{Error, Result};
use crate::lattice::{absorb, Absorption, Kernel};

fn check_site(kernel: &Kernel, eta: &Configuration, x: usize) -> Result<()> {
    if eta.len() != kernel.len() {
        return Err(Error::invalid(format!(
            "configuration has {} sites, space has {}",
            eta.len(),
            kernel.len()
        )));
    }
    if x >= kernel.len() {
        return Err(Error::invalid(format!("site {x} outside the space")));
    }
    Ok(())
}

fn check_pair(kernel: &Kernel, eta: &Configuration, x: usize, y: usize) -> Result<()> {
    check_site(kernel, eta, x)?;
    check_site(kernel, eta, y)?;
    if x == y {
        return Err(Error::invalid("rates are defined for x != y"));
    }
    Ok(())
}

/// The walk from `x` stopped at the first vacant site or on its return to
/// `x`. `hits[y]` for vacant `y` is `q(x, y, eta)`, `hits[x]` is the
/// cancellation probability and the lost mass is the disappearance part.
pub fn exclusion_solve(kernel: &Kernel, x: usize, eta: &Configuration) -> Result<Absorption> {
    check_site(kernel, eta, x)?;
    absorb(kernel, x, |s| s == x || !eta.get(s))
}

/// `q(x, y, eta)`: the walk from `x` reaches `y` before returning to `x`,
/// with every intermediate site occupied.
pub fn q_rate(kernel: &Kernel, x: usize, y: usize, eta: &Configuration) -> Result<f64> {
    check_pair(kernel, eta, x, y)?;
    Ok(absorb(kernel, x, |s| s == x || s == y || !eta.get(s))?.at(y))
}

/// `q_bar(x, y, eta)`: as [`q_rate`] without the restriction on returns to
/// `x`. The start is transient only when it is occupied.
pub fn q_bar_rate(kernel: &Kernel, x: usize, y: usize, eta: &Configuration) -> Result<f64> {
    check_pair(kernel, eta, x, y)?;
    Ok(absorb(kernel, x, |s| s == y || !eta.get(s))?.at(y))
}

/// `delta(x, eta)`: the walk from an occupied `x` stays on occupied sites
/// forever and never returns. Zero when `x` is vacant.
///
/// On tori this is the mass trapped in closed occupied classes; on segments
/// it also counts exits (open boundary) or escapes through the occupied
/// exterior (nearest-neighbour kernels only).
pub fn delta_rate(kernel: &Kernel, x: usize, eta: &Configuration) -> Result<f64> {
    check_site(kernel, eta, x)?;
    if !eta.get(x) {
        return Ok(0.0);
    }
    Ok(exclusion_solve(kernel, x, eta)?.lost())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetRate {
    pub site: usize,
    pub q: f64,
    pub q_bar: f64,
}

/// All rates out of one source site; targets are the vacant sites the walk
/// can reach.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub source: usize,
    pub targets: Vec<TargetRate>,
    pub cancel: f64,
    pub delta: f64,
}

impl RateReport {
    /// Jump, cancel and disappearance probabilities summed.
    pub fn total(&self) -> f64 {
        self.targets.iter().map(|t| t.q).sum::<f64>() + self.cancel + self.delta
    }
}

pub fn rate_report(kernel: &Kernel, x: usize, eta: &Configuration) -> Result<RateReport> {
    let ex = exclusion_solve(kernel, x, eta)?;
    let bar = absorb(kernel, x, |s| !eta.get(s))?;
    let targets = eta
        .vacant()
        .filter(|&y| y != x)
        .filter(|&y| bar.at(y) > 0.0 || ex.at(y) > 0.0)
        .map(|y| TargetRate { site: y, q: ex.at(y), q_bar: bar.at(y) })
        .collect();
    Ok(RateReport {
        source: x,
        targets,
        cancel: ex.at(x),
        delta: if eta.get(x) { ex.lost() } else { 0.0 },
    })
}

/// Jump rates of every occupied site of one configuration.
#[derive(Debug, Clone)]
pub struct JumpTable {
    /// `jumps[x]` lists `(y, q(x, y, eta))` for vacant `y` with positive rate.
    pub jumps: Vec<Vec<(usize, f64)>>,
    pub cancel: Vec<f64>,
    pub delta: Vec<f64>,
}

impl JumpTable {
    pub fn new(kernel: &Kernel, eta: &Configuration) -> Result<Self> {
        let n = kernel.len();
        let mut t = JumpTable { jumps: vec![Vec::new(); n], cancel: vec![0.0; n], delta: vec![0.0; n] };
        for x in eta.occupied() {
            let ex = exclusion_solve(kernel, x, eta)?;
            t.jumps[x] = eta.vacant().filter(|&y| ex.at(y) > 0.0).map(|y| (y, ex.at(y))).collect();
            t.cancel[x] = ex.at(x);
            t.delta[x] = ex.lost();
        }
        Ok(t)
    }

    /// Total rate of leaving `x`: jumps plus disappearance.
    pub fn exit_rate(&self, x: usize) -> f64 {
        self.jumps[x].iter().map(|(_, q)| q).sum::<f64>() + self.delta[x]
    }
}

/// `L f_R(eta)` split into its gain and loss parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorValue {
    pub plus: f64,
    pub minus: f64,
}

impl GeneratorValue {
    pub fn total(&self) -> f64 {
        self.plus - self.minus
    }
}

pub fn generator_apply(kernel: &Kernel, r: &CylinderSet, eta: &Configuration) -> Result<GeneratorValue> {
    Ok(generator_from_table(&JumpTable::new(kernel, eta)?, r, eta))
}

/// Same as [`generator_apply`] with the rates precomputed.
pub fn generator_from_table(table: &JumpTable, r: &CylinderSet, eta: &Configuration) -> GeneratorValue {
    let mut plus = 0.0;
    // a gain needs exactly one vacancy in R, filled from outside R
    let holes: Vec<usize> = r.sites().iter().copied().filter(|&y| !eta.get(y)).collect();
    if let [y] = holes[..] {
        for x in eta.occupied().filter(|&x| !r.contains(x)) {
            plus += table.jumps[x].iter().filter(|(t, _)| *t == y).map(|(_, q)| q).sum::<f64>();
        }
    }
    let minus = if holes.is_empty() { r.sites().iter().map(|&x| table.exit_rate(x)).sum() } else { 0.0 };
    GeneratorValue { plus, minus }
}

/// `L++ f_x(eta) = sum_y eta(y) q(y, x, eta)`: the rate at which particles
/// arrive at `x`, occupied or not.
pub fn arrival_rate(kernel: &Kernel, x: usize, eta: &Configuration) -> Result<f64> {
    check_site(kernel, eta, x)?;
    let mut total = 0.0;
    for y in eta.occupied().filter(|&y| y != x) {
        total += q_rate(kernel, y, x, eta)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateVariant {
    Q,
    QBar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Displacement {
    pub signed: f64,
    pub absolute: f64,
}

/// `sum_y (y - x)[1 - eta(y)] rate(x, y, eta)` and the same with `|y - x|`.
///
/// Positions are taken on a segment, and the walk must meet a vacancy before
/// it can leave the segment, so the sums are those of the walk on `Z`.
pub fn displacement_sum(kernel: &Kernel, x: usize, eta: &Configuration, variant: RateVariant) -> Result<Displacement> {
    check_site(kernel, eta, x)?;
    let space = kernel.space();
    if space.bounds().is_none() {
        return Err(Error::precondition("displacement sums need a segment of Z (positions on a torus are ambiguous)"));
    }
    let solve = match variant {
        RateVariant::Q => absorb(kernel, x, |s| s == x || !eta.get(s))?,
        RateVariant::QBar => absorb(kernel, x, |s| !eta.get(s))?,
    };
    if solve.lost() > 0.0 {
        return Err(Error::precondition(format!(
            "the walk from {x} can leave the window before meeting a vacancy (lost mass {:e}); widen the window",
            solve.lost()
        )));
    }
    let px = space.position(x);
    let mut out = Displacement { signed: 0.0, absolute: 0.0 };
    for y in eta.vacant().filter(|&y| y != x) {
        let d = (space.position(y) - px) as f64;
        out.signed += d * solve.at(y);
        out.absolute += d.abs() * solve.at(y);
    }
    Ok(out)
}

/// Every transition out of `eta` with its rate: jumps `eta -> eta^{xy}` and
/// disappearances `eta -> eta_x`.
pub fn transitions(kernel: &Kernel, eta: &Configuration) -> Result<Vec<(Configuration, f64)>> {
    let table = JumpTable::new(kernel, eta)?;
    let mut out = Vec::new();
    for x in eta.occupied() {
        for &(y, q) in &table.jumps[x] {
            out.push((eta.swap(x, y), q));
        }
        if table.delta[x] > 0.0 {
            out.push((eta.kill(x), table.delta[x]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, Offsets, SiteSpace};

    fn ring(n: usize, steps: &[(i64, f64)]) -> Kernel {
        Kernel::from_offsets(&SiteSpace::ring(n).unwrap(), &Offsets::one_dim(steps).unwrap()).unwrap()
    }

    fn nn_segment(lo: i64, hi: i64, p: f64, b: Boundary) -> Kernel {
        Kernel::from_offsets(&SiteSpace::segment(lo, hi, b).unwrap(), &Offsets::nearest_neighbor(p).unwrap()).unwrap()
    }

    fn eta_at(k: &Kernel, occupied: &[i64]) -> Configuration {
        let s = k.space();
        Configuration::from_sites(k.len(), &occupied.iter().map(|&p| s.site_at(p).unwrap()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn nearest_neighbour_q() {
        let k = nn_segment(-5, 5, 0.7, Boundary::OpenEscape);
        let s = k.space();
        let (o, one, two) = (s.site_at(0).unwrap(), s.site_at(1).unwrap(), s.site_at(2).unwrap());
        for occ in [&[0][..], &[0, 1, -1, -2], &[0, 2, 3]] {
            let eta = eta_at(&k, occ);
            assert!((q_rate(&k, o, one, &eta).unwrap() - 0.7).abs() < 1e-14);
        }
        assert_eq!(q_rate(&k, o, two, &eta_at(&k, &[0])).unwrap(), 0.0);
        assert!((q_rate(&k, o, two, &eta_at(&k, &[0, 1])).unwrap() - 0.49).abs() < 1e-14);
    }

    #[test]
    fn q_bar_examples() {
        let k = nn_segment(-5, 5, 0.7, Boundary::OpenEscape);
        let s = k.space();
        let eta = eta_at(&k, &[0]);
        assert!((q_bar_rate(&k, s.site_at(0).unwrap(), s.site_at(1).unwrap(), &eta).unwrap() - 0.7).abs() < 1e-14);
        let k = nn_segment(-5, 5, 0.5, Boundary::OpenEscape);
        let eta = eta_at(&k, &[0, -1]);
        let v = q_bar_rate(&k, s.site_at(0).unwrap(), s.site_at(1).unwrap(), &eta).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-14, "{v}");
    }

    #[test]
    fn delta_on_half_filled_segment() {
        let k = nn_segment(-3, 6, 0.7, Boundary::OccupiedExterior);
        let eta = eta_at(&k, &[0, 1, 2, 3, 4, 5, 6]);
        let d = delta_rate(&k, k.space().site_at(0).unwrap(), &eta).unwrap();
        assert!((d - 0.4).abs() < 1e-12, "{d}");
        let k1 = nn_segment(-3, 6, 1.0, Boundary::OccupiedExterior);
        assert!((delta_rate(&k1, k1.space().site_at(0).unwrap(), &eta).unwrap() - 1.0).abs() < 1e-14);
        let torus = ring(6, &[(1, 0.7), (-1, 0.3)]);
        let full = Configuration::full(6);
        assert_eq!(delta_rate(&torus, 2, &full).unwrap(), 0.0);
    }

    #[test]
    fn long_range_exterior_is_not_computable() {
        let space = SiteSpace::segment(0, 5, Boundary::OccupiedExterior).unwrap();
        let k = Kernel::from_offsets(&space, &Offsets::one_dim(&[(2, 0.5), (-1, 0.5)]).unwrap()).unwrap();
        let eta = Configuration::full(6);
        assert!(matches!(delta_rate(&k, 5, &eta), Err(Error::NotComputable(_))));
    }

    #[test]
    fn generator_examples() {
        let k = ring(3, &[(1, 0.5), (-1, 0.5)]);
        let r0 = CylinderSet::new(&[0], 3).unwrap();
        let single = Configuration::from_bitstring("010").unwrap();
        assert!((generator_apply(&k, &r0, &single).unwrap().total() - 0.5).abs() < 1e-15);
        let tasep = ring(3, &[(1, 1.0)]);
        assert_eq!(generator_apply(&tasep, &r0, &single).unwrap().total(), 0.0);
        for r in CylinderSet::all_up_to(3, 3) {
            assert_eq!(generator_apply(&k, &r, &Configuration::full(3)).unwrap().total(), 0.0);
        }
    }

    #[test]
    fn arrival_examples() {
        let k = ring(4, &[(1, 0.7), (-1, 0.3)]);
        assert_eq!(arrival_rate(&k, 0, &Configuration::empty(4)).unwrap(), 0.0);
        let eta = Configuration::from_bitstring("0010").unwrap();
        assert!((arrival_rate(&k, 1, &eta).unwrap() - 0.3).abs() < 1e-15);
        let two = ring(2, &[(1, 1.0)]);
        assert!((arrival_rate(&two, 0, &Configuration::full(2)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn displacement_of_empty_configuration_is_kernel_mean() {
        let k = nn_segment(-4, 4, 0.7, Boundary::OpenEscape);
        let eta = eta_at(&k, &[0]);
        let d = displacement_sum(&k, k.space().site_at(0).unwrap(), &eta, RateVariant::Q).unwrap();
        assert!((d.signed - 0.4).abs() < 1e-14);
        assert!((d.absolute - 1.0).abs() < 1e-14);
        let torus = ring(5, &[(1, 0.5), (-1, 0.5)]);
        assert!(displacement_sum(&torus, 0, &Configuration::full(5), RateVariant::Q).is_err());
    }

    #[test]
    fn displacement_rejects_clusters_touching_the_edge() {
        let k = nn_segment(0, 4, 0.5, Boundary::OpenEscape);
        let eta = Configuration::from_bitstring("11100").unwrap();
        assert!(matches!(
            displacement_sum(&k, 1, &eta, RateVariant::QBar),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn report_conserves_mass() {
        let k = ring(7, &[(2, 0.2), (-1, 0.5), (1, 0.3)]);
        let eta = Configuration::from_bitstring("1101100").unwrap();
        let rep = rate_report(&k, 1, &eta).unwrap();
        assert!((rep.total() - 1.0).abs() < 1e-12);
        assert_eq!(rep.delta, 0.0);
        for t in &rep.targets {
            assert!(t.q <= t.q_bar + 1e-15);
        }
        let json = serde_json::to_value(&rep).unwrap();
        assert!(json.get("targets").unwrap().as_array().unwrap()[0].get("q_bar").is_some());
    }

    #[test]
    fn transitions_are_swaps_and_kills() {
        let k = nn_segment(0, 3, 0.6, Boundary::OpenEscape);
        let eta = Configuration::from_bitstring("1101").unwrap();
        let total: f64 = transitions(&k, &eta).unwrap().iter().map(|(_, r)| r).sum();
        let exits: f64 = eta.occupied().map(|x| JumpTable::new(&k, &eta).unwrap().exit_rate(x)).sum();
        assert!((total - exits).abs() < 1e-14);
        for (to, _) in transitions(&k, &eta).unwrap() {
            assert!(to.count() == eta.count() || to.count() + 1 == eta.count());
        }
    }
}
