//! Pathwise construction: Poisson clocks at every site and one auxiliary
//! walk per `(ring, site)`.
//!
//! All randomness is keyed by position, never by state, so any number of
//! configurations can be driven by the same clocks and walks. A coupled run
//! is two configurations; a window sequence is several.

mod trajectory;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

pub use trajectory::{Event, Outcome, PairTrajectory, Trajectory};

use crate::coupled::PairConfiguration;
use crate::error::{Error, Result};
use crate::lattice::walk::{self, Loc, DEFAULT_STEP_CAP};
use crate::lattice::Kernel;
use crate::rates::Configuration;
use crate::rng::{self, StreamRng};

const CLOCK_BIT: u64 = 1 << 63;
const SITE_BITS: u32 = 24;

/// Master seed plus the rule that turns `(ring, site)` into a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPlan {
    pub seed: u64,
    pub step_cap: usize,
}

impl RngPlan {
    pub fn new(seed: u64) -> Self {
        RngPlan { seed, step_cap: DEFAULT_STEP_CAP }
    }

    pub fn with_step_cap(mut self, cap: usize) -> Self {
        self.step_cap = cap;
        self
    }

    /// Exponential clock of `site`.
    pub fn clock(&self, site: usize) -> StreamRng {
        rng::stream(self.seed, site as u64 | CLOCK_BIT)
    }

    /// Auxiliary walk attached to the `ring`-th ring (counted from 1) of `site`.
    pub fn chain(&self, ring: u64, site: usize) -> StreamRng {
        rng::stream(self.seed, ring << SITE_BITS | site as u64)
    }

    fn check_space(&self, n: usize) -> Result<()> {
        if n >= 1 << SITE_BITS {
            return Err(Error::TooLarge(format!("{n} sites exceed the plan's site key width")));
        }
        Ok(())
    }
}

/// Steps of one auxiliary walk, generated on first use and shared by every
/// configuration that reads them.
struct Chain<'k> {
    kernel: &'k Kernel,
    start: usize,
    rng: StreamRng,
    steps: Vec<Loc>,
}

impl Chain<'_> {
    fn at(&mut self, i: usize) -> Loc {
        while self.steps.len() <= i {
            let from = self.steps.last().copied().unwrap_or(Loc::Site(self.start));
            let next = walk::step(self.kernel, from, &mut self.rng);
            self.steps.push(next);
        }
        self.steps[i]
    }
}

fn resolve(chain: &mut Chain<'_>, x: usize, conf: &Configuration, cap: usize) -> Outcome {
    for i in 0..cap {
        match chain.at(i) {
            Loc::Escaped => return Outcome::Disappeared,
            Loc::Site(y) if y == x => return Outcome::Cancelled,
            Loc::Site(y) if !conf.get(y) => return Outcome::Jump(y),
            _ => {}
        }
    }
    Outcome::StepCap
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Several configurations driven by the same clocks and walks up to a
/// horizon. `observe` sees every ring at which some member is occupied,
/// after the members have been updated.
pub fn run_ensemble<F>(
    kernel: &Kernel,
    initial: &[Configuration],
    horizon: f64,
    plan: &RngPlan,
    mut observe: F,
) -> Result<Vec<Trajectory>>
where
    F: FnMut(f64, &[Configuration]),
{
    let n = kernel.len();
    plan.check_space(n)?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!("horizon {horizon} must be finite and nonnegative")));
    }
    if let Some(c) = initial.iter().find(|c| c.len() != n) {
        return Err(Error::invalid(format!("initial configuration has {} sites, space has {n}", c.len())));
    }
    if !kernel.is_stochastic() {
        return Err(Error::precondition("simulation needs a stochastic kernel"));
    }
    let mut state: Vec<Configuration> = initial.to_vec();
    let mut trajectories: Vec<Trajectory> = initial.iter().map(|c| Trajectory::new(c.clone(), horizon)).collect();
    if state.iter().all(|c| c.is_empty()) {
        return Ok(trajectories);
    }
    let mut clocks: Vec<StreamRng> = (0..n).map(|x| plan.clock(x)).collect();
    let mut rings = vec![0u64; n];
    let mut queue = BinaryHeap::with_capacity(n);
    for (x, clock) in clocks.iter_mut().enumerate() {
        let t: f64 = Exp1.sample(clock);
        queue.push(Reverse((Time(t), x)));
    }
    while let Some(Reverse((Time(t), x))) = queue.pop() {
        if t > horizon {
            break;
        }
        rings[x] += 1;
        let ring = rings[x];
        let dt: f64 = Exp1.sample(&mut clocks[x]);
        queue.push(Reverse((Time(t + dt), x)));
        if !state.iter().any(|c| c.get(x)) {
            continue;
        }
        let mut chain = Chain { kernel, start: x, rng: plan.chain(ring, x), steps: Vec::new() };
        for (conf, traj) in state.iter_mut().zip(trajectories.iter_mut()) {
            if !conf.get(x) {
                continue;
            }
            let outcome = resolve(&mut chain, x, conf, plan.step_cap);
            match outcome {
                Outcome::Jump(y) => {
                    conf.set(x, false);
                    conf.set(y, true);
                }
                Outcome::Disappeared => conf.set(x, false),
                Outcome::Cancelled | Outcome::StepCap => {}
            }
            traj.events.push(Event { time: t, site: x, ring, outcome });
        }
        observe(t, &state);
        if state.iter().all(|c| c.is_empty()) {
            break;
        }
    }
    for (traj, conf) in trajectories.iter_mut().zip(state) {
        traj.last = conf;
    }
    Ok(trajectories)
}

pub fn run_single(kernel: &Kernel, initial: &Configuration, horizon: f64, plan: &RngPlan) -> Result<Trajectory> {
    Ok(run_ensemble(kernel, std::slice::from_ref(initial), horizon, plan, |_, _| {})?.remove(0))
}

pub fn run_coupled(kernel: &Kernel, pair: &PairConfiguration, horizon: f64, plan: &RngPlan) -> Result<PairTrajectory> {
    let mut runs = run_ensemble(kernel, &[pair.eta.clone(), pair.xi.clone()], horizon, plan, |_, _| {})?;
    let xi = runs.pop().expect("two runs");
    let eta = runs.pop().expect("two runs");
    Ok(PairTrajectory { eta, xi })
}

/// Runs of the restrictions `xi^k` of `xi` to the windows `[-k, k]`, all on
/// one plan.
pub fn run_window_sequence(
    kernel: &Kernel,
    xi: &Configuration,
    radii: &[usize],
    horizon: f64,
    plan: &RngPlan,
) -> Result<Vec<Trajectory>> {
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("window radii must be strictly increasing"));
    }
    let space = kernel.space();
    let mut initial = Vec::with_capacity(radii.len());
    for &k in radii {
        let window = space.window(k)?;
        let mut c = Configuration::empty(xi.len());
        for s in window {
            c.set(s, xi.get(s));
        }
        initial.push(c);
    }
    run_ensemble(kernel, &initial, horizon, plan, |_, _| {})
}
