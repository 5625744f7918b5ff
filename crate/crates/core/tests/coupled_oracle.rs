//! Coupled rates against a forward propagation of the shared walk, which
//! tracks where each marginal stops without any linear solve.

use std::collections::{BTreeMap, HashMap};

use lrep::coupled::{coupled_rates, window_accounting, PairConfiguration};
use lrep::lattice::{Boundary, Kernel, Offsets, SiteSpace};
use lrep::rates::Configuration;
use lrep::rng;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Status {
    Running,
    Absent,
    Cancel,
    Stop(usize),
    Lost,
}

fn advance(status: Status, conf: &Configuration, x: usize, y: Option<usize>) -> Status {
    match (status, y) {
        (Status::Running, None) => Status::Lost,
        (Status::Running, Some(y)) if y == x => Status::Cancel,
        (Status::Running, Some(y)) if !conf.get(y) => Status::Stop(y),
        (s, _) => s,
    }
}

fn result(status: Status, conf: &Configuration, x: usize) -> Configuration {
    match status {
        Status::Stop(y) => conf.swap(x, y),
        Status::Lost => conf.kill(x),
        _ => conf.clone(),
    }
}

/// Law of the pair reached from `pair` when the clock at `x` rings,
/// keyed by label, by iterating the walk until the running mass is negligible.
fn propagate(kernel: &Kernel, x: usize, pair: &PairConfiguration) -> BTreeMap<String, f64> {
    let start = |c: &Configuration| if c.get(x) { Status::Running } else { Status::Absent };
    let mut mass: HashMap<(usize, Status, Status), f64> = HashMap::from([((x, start(&pair.eta), start(&pair.xi)), 1.0)]);
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for _ in 0..1_000_000 {
        let mut next: HashMap<(usize, Status, Status), f64> = HashMap::new();
        for (&(s, a, b), &m) in &mass {
            let mut moves: Vec<(Option<usize>, f64)> = kernel.row(s).iter().map(|&(y, p)| (Some(y), p)).collect();
            let exit = kernel.exit_total(s);
            if exit > 0.0 {
                moves.push((None, exit));
            }
            for (y, p) in moves {
                let (a2, b2) = (advance(a, &pair.eta, x, y), advance(b, &pair.xi, x, y));
                if a2 != Status::Running && b2 != Status::Running {
                    let to = PairConfiguration::new(result(a2, &pair.eta, x), result(b2, &pair.xi, x)).unwrap();
                    *out.entry(to.label()).or_default() += m * p;
                } else {
                    *next.entry((y.expect("running walks are inside"), a2, b2)).or_default() += m * p;
                }
            }
        }
        mass = next;
        if mass.values().sum::<f64>() < 1e-15 {
            return out;
        }
    }
    panic!("walk mass did not drain");
}

fn report_law(kernel: &Kernel, x: usize, pair: &PairConfiguration) -> BTreeMap<String, f64> {
    let rep = coupled_rates(kernel, x, pair).unwrap();
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for (to, rate, _) in rep.transitions(pair) {
        *out.entry(to.label()).or_default() += rate;
    }
    *out.entry(pair.label()).or_default() += rep.cancel;
    out
}

fn compare(kernel: &Kernel, pair: &PairConfiguration) {
    for x in (0..pair.len()).filter(|&x| pair.eta.get(x) || pair.xi.get(x)) {
        let a = propagate(kernel, x, pair);
        let b = report_law(kernel, x, pair);
        for key in a.keys().chain(b.keys()) {
            let (u, v) = (a.get(key).copied().unwrap_or(0.0), b.get(key).copied().unwrap_or(0.0));
            assert!((u - v).abs() < 1e-10, "x={x} pair={} -> {key}: walk {u} vs rates {v}", pair.label());
        }
    }
}

fn random_pair(n: usize, r: &mut impl Rng, need_vacancy: bool) -> PairConfiguration {
    loop {
        let eta = Configuration::from_bits(&(0..n).map(|_| r.random_bool(0.6)).collect::<Vec<_>>());
        let xi = Configuration::from_bits(&(0..n).map(|_| r.random_bool(0.6)).collect::<Vec<_>>());
        if !need_vacancy || (!eta.is_full() && !xi.is_full()) {
            return PairConfiguration::new(eta, xi).unwrap();
        }
    }
}

#[test]
fn torus_clusters_match_walk_propagation() {
    let mut r = rng::stream(41, 0);
    let laws = [
        Offsets::nearest_neighbor(0.7).unwrap(),
        Offsets::one_dim(&[(1, 0.5), (3, 0.2), (-2, 0.3)]).unwrap(),
        Offsets::one_dim(&[(2, 1.0 / 3.0), (-1, 2.0 / 3.0)]).unwrap(),
    ];
    for n in [6, 9, 12] {
        for law in &laws {
            let k = Kernel::from_offsets(&SiteSpace::ring(n).unwrap(), law).unwrap();
            for _ in 0..4 {
                compare(&k, &random_pair(n, &mut r, true));
            }
        }
    }
}

#[test]
fn open_segments_match_walk_propagation() {
    let mut r = rng::stream(42, 0);
    for law in [Offsets::nearest_neighbor(0.4).unwrap(), Offsets::one_dim(&[(1, 0.6), (-2, 0.4)]).unwrap()] {
        let k = Kernel::from_offsets(&SiteSpace::segment(0, 9, Boundary::OpenEscape).unwrap(), &law).unwrap();
        for _ in 0..6 {
            compare(&k, &random_pair(10, &mut r, false));
        }
    }
}

#[test]
fn positive_part_equals_inflow_and_negative_part_dominates_outflow() {
    let mut r = rng::stream(43, 0);
    for law in [Offsets::nearest_neighbor(0.7).unwrap(), Offsets::one_dim(&[(1, 0.5), (3, 0.2), (-2, 0.3)]).unwrap()] {
        let space = SiteSpace::ring(11).unwrap();
        let k = Kernel::from_offsets(&space, &law).unwrap();
        for _ in 0..30 {
            let pair = random_pair(11, &mut r, true);
            for n in [1, 2, 3] {
                let w = window_accounting(&k, &space.window(n).unwrap(), &pair).unwrap();
                assert!((w.plus - w.inflow_a).abs() < 1e-10, "{w:?} {}", pair.label());
                assert!(w.minus >= w.outflow_b_plus_d - 1e-10, "{w:?} {}", pair.label());
            }
        }
    }
}
