//! Exact rates of the basic coupling, its generator on pair functions, and
//! the discrepancy functionals `A`, `B`, `C`, `D`.
//!
//! Both marginals read the same walk. At a doubly occupied source the walk is
//! first run until it meets a site where either marginal stops (or returns
//! to the source); if only one marginal stops there, the other continues from
//! that site on its own. The strong Markov property turns every joint rate
//! into a product of two absorbing solves.

mod functions;
mod pair;

use serde::Serialize;

pub use functions::{alternations, positive_in, Marginal, PairFunction, PairTerm};
pub use pair::PairConfiguration;

use crate::error::{Error, Result};
use crate::lattice::{absorb, Absorption, Kernel};
use crate::rates::{exclusion_solve, q_rate, Configuration};

/// The terms of the coupled generator, numbered as the equations that
/// define them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Both particles move together to `y`.
    Together,
    /// `eta` stops at `y`, `xi` continues to `z`.
    EtaStopsXiContinues,
    /// `xi` stops at `y`, `eta` continues to `z`.
    XiStopsEtaContinues,
    /// `eta` moves to `y`, `xi` returns to `x`.
    EtaMovesXiStays,
    /// `xi` moves to `y`, `eta` returns to `x`.
    XiMovesEtaStays,
    /// Lone `eta` particle moves.
    EtaAlone,
    /// Lone `xi` particle moves.
    XiAlone,
    /// `eta` moves to `y`, `xi` disappears.
    EtaMovesXiDisappears,
    /// `xi` moves to `y`, `eta` disappears.
    XiMovesEtaDisappears,
    /// Lone `eta` particle disappears.
    EtaDisappears,
    /// Lone `xi` particle disappears.
    XiDisappears,
    /// Both particles disappear.
    BothDisappear,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::Together,
        Family::EtaStopsXiContinues,
        Family::XiStopsEtaContinues,
        Family::EtaMovesXiStays,
        Family::XiMovesEtaStays,
        Family::EtaAlone,
        Family::XiAlone,
        Family::EtaMovesXiDisappears,
        Family::XiMovesEtaDisappears,
        Family::EtaDisappears,
        Family::XiDisappears,
        Family::BothDisappear,
    ];

    /// Equation number of the generator term.
    pub fn equation(self) -> u8 {
        Family::ALL.iter().position(|&f| f == self).expect("listed") as u8 + 2
    }

    /// The pair after the transition with source `x`, first stop `y` and
    /// second stop `z`.
    pub fn apply(self, pair: &PairConfiguration, x: usize, y: usize, z: usize) -> PairConfiguration {
        let (eta, xi) = (&pair.eta, &pair.xi);
        let (e, k) = match self {
            Family::Together => (eta.swap(x, y), xi.swap(x, y)),
            Family::EtaStopsXiContinues => (eta.swap(x, y), xi.swap(x, z)),
            Family::XiStopsEtaContinues => (eta.swap(x, z), xi.swap(x, y)),
            Family::EtaMovesXiStays | Family::EtaAlone => (eta.swap(x, y), xi.clone()),
            Family::XiMovesEtaStays | Family::XiAlone => (eta.clone(), xi.swap(x, y)),
            Family::EtaMovesXiDisappears => (eta.swap(x, y), xi.kill(x)),
            Family::XiMovesEtaDisappears => (eta.kill(x), xi.swap(x, y)),
            Family::EtaDisappears => (eta.kill(x), xi.clone()),
            Family::XiDisappears => (eta.clone(), xi.kill(x)),
            Family::BothDisappear => (eta.kill(x), xi.kill(x)),
        };
        PairConfiguration { eta: e, xi: k }
    }
}

/// One nonzero coupled rate out of a source site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledEntry {
    pub family: Family,
    pub equation: u8,
    pub y: Option<usize>,
    pub z: Option<usize>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledReport {
    pub source: usize,
    pub entries: Vec<CoupledEntry>,
    /// Probability that both walks come back to the source together.
    pub cancel: f64,
}

impl CoupledReport {
    pub fn rate(&self, family: Family, y: Option<usize>, z: Option<usize>) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.family == family && e.y == y && e.z == z)
            .map(|e| e.rate)
            .sum()
    }

    pub fn family_total(&self, family: Family) -> f64 {
        self.entries.iter().filter(|e| e.family == family).map(|e| e.rate).sum()
    }

    /// All outcomes of the walk, including the joint cancellation.
    pub fn total(&self) -> f64 {
        // entries from the two-phase split share their first-phase mass
        self.entries.iter().map(|e| e.rate).sum::<f64>() + self.cancel
    }

    /// The pair reached by each entry.
    pub fn transitions(&self, pair: &PairConfiguration) -> Vec<(PairConfiguration, f64, Family)> {
        let x = self.source;
        self.entries
            .iter()
            .map(|e| (e.family.apply(pair, x, e.y.unwrap_or(x), e.z.unwrap_or(x)), e.rate, e.family))
            .collect()
    }
}

fn check(kernel: &Kernel, pair: &PairConfiguration, x: usize) -> Result<()> {
    if pair.len() != kernel.len() {
        return Err(Error::invalid(format!("pair has {} sites, space has {}", pair.len(), kernel.len())));
    }
    if x >= kernel.len() {
        return Err(Error::invalid(format!("site {x} outside the space")));
    }
    Ok(())
}

fn push(entries: &mut Vec<CoupledEntry>, family: Family, y: Option<usize>, z: Option<usize>, rate: f64) {
    if rate > 0.0 {
        entries.push(CoupledEntry { family, equation: family.equation(), y, z, rate });
    }
}

/// Continuation of one marginal from an intermediate stop `y`: it keeps
/// going through its own occupied sites until it meets a vacancy or the
/// source.
fn continue_from(kernel: &Kernel, x: usize, y: usize, conf: &Configuration) -> Result<Absorption> {
    absorb(kernel, y, |s| s == x || !conf.get(s))
}

/// Every nonzero coupled rate with source `x`.
pub fn coupled_rates(kernel: &Kernel, x: usize, pair: &PairConfiguration) -> Result<CoupledReport> {
    check(kernel, pair, x)?;
    let (eta, xi) = (&pair.eta, &pair.xi);
    let mut entries = Vec::new();
    let mut cancel = 0.0;
    match (eta.get(x), xi.get(x)) {
        (true, true) => {
            let first = absorb(kernel, x, |s| s == x || !eta.get(s) || !xi.get(s))?;
            cancel = first.at(x);
            for y in (0..pair.len()).filter(|&y| y != x) {
                let p1 = first.at(y);
                if p1 == 0.0 {
                    continue;
                }
                match (eta.get(y), xi.get(y)) {
                    (false, false) => push(&mut entries, Family::Together, Some(y), None, p1),
                    (false, true) => {
                        let p2 = continue_from(kernel, x, y, xi)?;
                        for z in xi.vacant().filter(|&z| z != x) {
                            push(&mut entries, Family::EtaStopsXiContinues, Some(y), Some(z), p1 * p2.at(z));
                        }
                        push(&mut entries, Family::EtaMovesXiStays, Some(y), None, p1 * p2.at(x));
                        push(&mut entries, Family::EtaMovesXiDisappears, Some(y), None, p1 * p2.lost());
                    }
                    (true, false) => {
                        let p2 = continue_from(kernel, x, y, eta)?;
                        for z in eta.vacant().filter(|&z| z != x) {
                            push(&mut entries, Family::XiStopsEtaContinues, Some(y), Some(z), p1 * p2.at(z));
                        }
                        push(&mut entries, Family::XiMovesEtaStays, Some(y), None, p1 * p2.at(x));
                        push(&mut entries, Family::XiMovesEtaDisappears, Some(y), None, p1 * p2.lost());
                    }
                    (true, true) => unreachable!("doubly occupied sites are transient"),
                }
            }
            push(&mut entries, Family::BothDisappear, None, None, first.lost());
        }
        (true, false) => {
            let s = exclusion_solve(kernel, x, eta)?;
            cancel = s.at(x);
            for y in eta.vacant().filter(|&y| y != x) {
                push(&mut entries, Family::EtaAlone, Some(y), None, s.at(y));
            }
            push(&mut entries, Family::EtaDisappears, None, None, s.lost());
        }
        (false, true) => {
            let s = exclusion_solve(kernel, x, xi)?;
            cancel = s.at(x);
            for y in xi.vacant().filter(|&y| y != x) {
                push(&mut entries, Family::XiAlone, Some(y), None, s.at(y));
            }
            push(&mut entries, Family::XiDisappears, None, None, s.lost());
        }
        (false, false) => {}
    }
    Ok(CoupledReport { source: x, entries, cancel })
}

/// Every transition of the coupled chain out of `pair`, with its rate and
/// family. Entries leading to the same pair are not merged.
pub fn coupled_transitions(kernel: &Kernel, pair: &PairConfiguration) -> Result<Vec<(PairConfiguration, f64, Family)>> {
    let mut out = Vec::new();
    for x in 0..pair.len() {
        if pair.eta.get(x) || pair.xi.get(x) {
            out.extend(coupled_rates(kernel, x, pair)?.transitions(pair));
        }
    }
    Ok(out)
}

/// Residuals of the two marginal identities at a doubly occupied source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Consistency {
    pub moves: f64,
    pub disappearance: f64,
}

impl Consistency {
    pub fn max_abs(&self) -> f64 {
        self.moves.abs().max(self.disappearance.abs())
    }
}

/// Compare the `eta` marginal of a coupled report with independently solved
/// single-process rates: the coupled rates that move the `eta` particle to
/// `y` must add up to `q(x, y, eta)`, and those that kill it to
/// `delta(x, eta)`.
pub fn marginal_consistency_check(kernel: &Kernel, x: usize, y: usize, pair: &PairConfiguration) -> Result<Consistency> {
    let report = coupled_rates(kernel, x, pair)?;
    let q_eta = q_rate(kernel, x, y, &pair.eta)?;
    let delta_eta = crate::rates::delta_rate(kernel, x, &pair.eta)?;
    marginal_consistency_from(&report, pair, y, q_eta, delta_eta)
}

/// As [`marginal_consistency_check`] with the coupled report supplied.
pub fn marginal_consistency_from(
    report: &CoupledReport,
    pair: &PairConfiguration,
    y: usize,
    q_eta: f64,
    delta_eta: f64,
) -> Result<Consistency> {
    let x = report.source;
    if !(pair.eta.get(x) && pair.xi.get(x)) || pair.eta.get(y) || x == y {
        return Err(Error::precondition("consistency needs eta(x) = xi(x) = 1, eta(y) = 0 and y != x"));
    }
    let mut moved = 0.0;
    for e in &report.entries {
        let to_y = match e.family {
            Family::Together | Family::EtaStopsXiContinues | Family::EtaMovesXiStays | Family::EtaMovesXiDisappears => {
                e.y == Some(y)
            }
            Family::XiStopsEtaContinues => e.z == Some(y),
            _ => false,
        };
        if to_y {
            moved += e.rate;
        }
    }
    let killed = report.family_total(Family::BothDisappear) + report.family_total(Family::XiMovesEtaDisappears);
    Ok(Consistency { moves: q_eta - moved, disappearance: delta_eta - killed })
}

/// Values of the four discrepancy functionals at one `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Discrepancy {
    pub y: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// `A(x, y)`, `B(x, y)`, `C(x, y)` and `D(x, y)` for every `y != x`.
pub fn discrepancy_row(kernel: &Kernel, x: usize, pair: &PairConfiguration) -> Result<Vec<Discrepancy>> {
    check(kernel, pair, x)?;
    let n = pair.len();
    let (eta, xi) = (&pair.eta, &pair.xi);
    let mut rows: Vec<Discrepancy> = (0..n).map(|y| Discrepancy { y, ..Default::default() }).collect();
    if !eta.get(x) {
        return Ok(rows.into_iter().filter(|r| r.y != x).collect());
    }
    let positive = !xi.get(x);
    let direct = exclusion_solve(kernel, x, eta)?;
    for y in eta.vacant() {
        let q = direct.at(y);
        rows[y].c += q;
        if positive {
            rows[y].b += q;
            if !xi.get(y) {
                rows[y].a += q;
            } else {
                rows[y].d = q;
            }
        }
    }
    let prod = pair.product();
    for z in eta.occupied().filter(|&z| z != x) {
        let eta_z = eta.kill(z);
        // q_bar(x, ., eta_z): x stays occupied in eta_z, so it is transient
        let bar = absorb(kernel, x, |s| !eta_z.get(s))?;
        let qc = q_rate(kernel, z, x, eta)?;
        let qab = if positive && xi.get(z) { q_rate(kernel, z, x, &prod)? } else { 0.0 };
        for y in eta_z.vacant().filter(|&y| y != x) {
            let qb = bar.at(y);
            if qb == 0.0 {
                continue;
            }
            rows[y].c += qc * qb;
            rows[y].b += qab * qb;
            let xi_z_vacant = y == z || !xi.get(y);
            if xi_z_vacant {
                rows[y].a += qab * qb;
            }
        }
    }
    Ok(rows.into_iter().filter(|r| r.y != x).collect())
}

pub fn discrepancy_functionals(kernel: &Kernel, x: usize, y: usize, pair: &PairConfiguration) -> Result<Discrepancy> {
    if x == y {
        return Err(Error::invalid("discrepancy functionals are defined for x != y"));
    }
    Ok(discrepancy_row(kernel, x, pair)?.into_iter().find(|r| r.y == y).expect("y in range"))
}

/// `L~f(pair)` split into positive and negative contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledGeneratorValue {
    pub plus: f64,
    pub minus: f64,
}

impl CoupledGeneratorValue {
    pub fn total(&self) -> f64 {
        self.plus - self.minus
    }
}

pub fn coupled_generator_apply(kernel: &Kernel, f: &PairFunction, pair: &PairConfiguration) -> Result<CoupledGeneratorValue> {
    f.validate(pair.len())?;
    let base = f.eval(pair);
    let mut out = CoupledGeneratorValue { plus: 0.0, minus: 0.0 };
    for (to, rate, _) in coupled_transitions(kernel, pair)? {
        let diff = rate * (f.eval(&to) - base);
        if diff > 0.0 {
            out.plus += diff;
        } else {
            out.minus -= diff;
        }
    }
    Ok(out)
}

/// The accounting of positive discrepancies in a window: the positive part
/// of `L~f_n`, the `A` inflow across the window edge, the negative part, and
/// the `B` outflow plus `D` coalescences inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowAccounting {
    pub plus: f64,
    pub inflow_a: f64,
    pub minus: f64,
    pub outflow_b_plus_d: f64,
}

pub fn window_accounting(kernel: &Kernel, window: &[usize], pair: &PairConfiguration) -> Result<WindowAccounting> {
    let n = pair.len();
    let mut inside = vec![false; n];
    for &s in window {
        inside[s] = true;
    }
    let f = PairFunction::PositiveCount { sites: window.to_vec() };
    let g = coupled_generator_apply(kernel, &f, pair)?;
    let mut inflow = 0.0;
    let mut outflow = 0.0;
    for x in 0..n {
        if !(pair.eta.get(x) && !pair.xi.get(x)) {
            continue;
        }
        for r in discrepancy_row(kernel, x, pair)? {
            if !inside[x] && inside[r.y] {
                inflow += r.a;
            }
            if inside[x] && !inside[r.y] {
                outflow += r.b;
            }
            if inside[x] && inside[r.y] {
                outflow += r.d;
            }
        }
    }
    Ok(WindowAccounting { plus: g.plus, inflow_a: inflow, minus: g.minus, outflow_b_plus_d: outflow })
}
