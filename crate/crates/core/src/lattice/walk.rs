//! Sampled walks of the auxiliary chain, plus range statistics.

use rand::Rng;
use serde::Serialize;

use super::kernel::{Kernel, Offsets};
use super::space::{Boundary, Landing};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng;

/// Default cap on the number of steps of a sampled walk.
pub const DEFAULT_STEP_CAP: usize = 1_000_000;

/// Position of a walker. `Outside` only occurs on occupied-exterior segments
/// and carries the integer coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Loc {
    Site(usize),
    Outside(i64),
    Escaped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    HitTarget,
    ReturnedToStart,
    HitVacant,
    Escaped,
    StepCap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkPath {
    pub start: usize,
    pub steps: Vec<Loc>,
    pub termination: Termination,
}

impl WalkPath {
    /// Start followed by every site visited, exterior positions omitted.
    pub fn sites(&self) -> Vec<usize> {
        std::iter::once(self.start)
            .chain(self.steps.iter().filter_map(|l| match l {
                Loc::Site(s) => Some(*s),
                _ => None,
            }))
            .collect()
    }

    pub fn last(&self) -> Loc {
        self.steps.last().copied().unwrap_or(Loc::Site(self.start))
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// One step of the chain from `loc`.
///
/// On occupied-exterior segments the walk keeps its exact exterior
/// coordinate, which needs a translation-invariant step law.
pub fn step<R: Rng + ?Sized>(kernel: &Kernel, loc: Loc, rng: &mut R) -> Loc {
    let space = kernel.space();
    match loc {
        Loc::Escaped => Loc::Escaped,
        Loc::Site(x) => {
            if space.boundary() == Some(Boundary::OccupiedExterior) && kernel.exit_total(x) > 0.0 {
                if let Some(off) = kernel.offsets() {
                    return land(kernel, space.position(x) + off.sample(rng)[0]);
                }
            }
            match kernel.sample_step(x, rng) {
                Landing::Site(y) => Loc::Site(y),
                Landing::Exterior(_) => Loc::Escaped,
            }
        }
        Loc::Outside(pos) => {
            let off = kernel.offsets().expect("exterior positions only arise from step laws");
            land(kernel, pos + off.sample(rng)[0])
        }
    }
}

fn land(kernel: &Kernel, pos: i64) -> Loc {
    match kernel.space().site_at(pos) {
        Some(s) => Loc::Site(s),
        None => Loc::Outside(pos),
    }
}

/// Walk from `start` until `stop` fires on a visited site, the walk escapes,
/// or `cap` steps have been taken.
pub fn sample_walk<R, F>(kernel: &Kernel, start: usize, mut stop: F, cap: usize, rng: &mut R) -> Result<WalkPath>
where
    R: Rng + ?Sized,
    F: FnMut(usize) -> Option<Termination>,
{
    if start >= kernel.len() {
        return Err(Error::invalid(format!("start site {start} outside the space")));
    }
    if cap == 0 {
        return Err(Error::invalid("step cap must be at least 1"));
    }
    if !kernel.is_stochastic() {
        return Err(Error::precondition("sampling needs a stochastic kernel"));
    }
    let mut loc = Loc::Site(start);
    let mut steps = Vec::new();
    for _ in 0..cap {
        loc = step(kernel, loc, rng);
        steps.push(loc);
        match loc {
            Loc::Escaped => return Ok(WalkPath { start, steps, termination: Termination::Escaped }),
            Loc::Site(y) => {
                if let Some(t) = stop(y) {
                    return Ok(WalkPath { start, steps, termination: t });
                }
            }
            Loc::Outside(_) => {}
        }
    }
    Ok(WalkPath { start, steps, termination: Termination::StepCap })
}

/// Stop rule of the exclusion dynamics: returning to `start` cancels,
/// reaching a vacant site ends the jump.
pub fn exclusion_stop(start: usize, occupied: impl Fn(usize) -> bool) -> impl FnMut(usize) -> Option<Termination> {
    move |y| {
        if y == start {
            Some(Termination::ReturnedToStart)
        } else if !occupied(y) {
            Some(Termination::HitVacant)
        } else {
            None
        }
    }
}

/// Probability that a nearest-neighbour walk on `Z` never returns to its start.
pub fn escape_probability(offsets: &Offsets) -> Result<f64> {
    let p = offsets
        .nearest_neighbor_p()
        .ok_or_else(|| Error::not_computable("escape probability has a closed form only for nearest-neighbour walks"))?;
    Ok((2.0 * p - 1.0).abs())
}

/// Monte Carlo estimates of `E(tau_k)` and the law of `R_k`.
#[derive(Debug, Clone, Serialize)]
pub struct RangeStats {
    pub horizon: usize,
    pub replicas: usize,
    /// `mean_tau[k]` estimates `E(tau_k)`; indices 0 and unused slots are 0.
    pub mean_tau: Vec<f64>,
    pub se_tau: Vec<f64>,
    /// `range_counts[k][r]` counts replicas with `R_k = r`, for `k < horizon`.
    pub range_counts: Vec<Vec<u64>>,
    /// Replicas that hit the step cap before `tau_K`.
    pub capped: u64,
}

impl RangeStats {
    /// Empirical `P(R_k < threshold)` with its standard error.
    pub fn prob_range_below(&self, k: usize, threshold: f64) -> (f64, f64) {
        let counts = &self.range_counts[k];
        let total: u64 = counts.iter().sum();
        let below: u64 = counts.iter().enumerate().filter(|(r, _)| (*r as f64) < threshold).map(|(_, c)| c).sum();
        let p = below as f64 / total as f64;
        (p, (p * (1.0 - p) / total as f64).sqrt())
    }

    /// `max_k mean_tau[k] / k^3` over `2 <= k <= K`.
    pub fn cubic_constant(&self) -> f64 {
        (2..=self.horizon).map(|k| self.mean_tau[k] / (k as f64).powi(3)).fold(0.0, f64::max)
    }
}

/// Visited-set for one-dimensional walks, reused across replicas by stamping.
struct Visited {
    stamps: Vec<u32>,
    origin: i64,
    stamp: u32,
}

impl Visited {
    fn new() -> Self {
        Visited { stamps: vec![0; 1024], origin: 512, stamp: 0 }
    }

    fn reset(&mut self) {
        self.stamp += 1;
        if self.stamp == u32::MAX {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
    }

    /// Marks `pos`; true if it was not yet visited in this replica.
    fn insert(&mut self, pos: i64) -> bool {
        let idx = pos + self.origin;
        if idx < 0 || idx >= self.stamps.len() as i64 {
            let old = self.stamps.len();
            let mut grown = vec![0; old * 2];
            grown[old / 2..old / 2 + old].copy_from_slice(&self.stamps);
            self.stamps = grown;
            self.origin += (old / 2) as i64;
            return self.insert(pos);
        }
        let slot = &mut self.stamps[idx as usize];
        let fresh = *slot != self.stamp;
        *slot = self.stamp;
        fresh
    }
}

struct RangeBatch {
    tau_sum: Vec<u128>,
    tau_sq: Vec<u128>,
    reached: Vec<u64>,
    counts: Vec<Vec<u64>>,
    capped: u64,
}

const RANGE_BATCH: usize = 4096;

/// Range statistics of a one-dimensional walk with step law `offsets`,
/// up to `tau_K`, over `replicas` independent walks.
pub fn range_statistics(offsets: &Offsets, horizon: usize, replicas: usize, seed: u64) -> Result<RangeStats> {
    range_statistics_capped(offsets, horizon, replicas, seed, DEFAULT_STEP_CAP)
}

pub fn range_statistics_capped(
    offsets: &Offsets,
    horizon: usize,
    replicas: usize,
    seed: u64,
    cap: usize,
) -> Result<RangeStats> {
    if horizon < 2 {
        return Err(Error::invalid("range statistics need K >= 2"));
    }
    if replicas == 0 {
        return Err(Error::invalid("range statistics need at least one replica"));
    }
    if offsets.dim() != 1 {
        return Err(Error::invalid("range statistics are implemented for one-dimensional walks"));
    }
    let k_max = horizon;
    let batches = parallel::batches(replicas, RANGE_BATCH);
    let parts = parallel::map_indexed(batches.len(), |b| {
        let (index, _, len) = batches[b];
        let mut rng = rng::stream(seed, index as u64);
        let mut visited = Visited::new();
        let mut out = RangeBatch {
            tau_sum: vec![0; k_max + 1],
            tau_sq: vec![0; k_max + 1],
            reached: vec![0; k_max + 1],
            counts: (0..k_max).map(|k| vec![0; k + 2]).collect(),
            capped: 0,
        };
        for _ in 0..len {
            visited.reset();
            let mut pos = 0i64;
            visited.insert(pos);
            let mut range = 1usize;
            out.reached[1] += 1;
            out.counts[0][1] += 1;
            let mut n = 0usize;
            while range < k_max {
                if n == cap {
                    out.capped += 1;
                    break;
                }
                pos += offsets.sample(&mut rng)[0];
                n += 1;
                if visited.insert(pos) {
                    range += 1;
                    let t = n as u128;
                    out.tau_sum[range] += t;
                    out.tau_sq[range] += t * t;
                    out.reached[range] += 1;
                }
                if n < k_max {
                    out.counts[n][range] += 1;
                }
            }
            // the walk stopped at tau_K; R stays at K afterwards
            if range == k_max {
                for m in (n + 1)..k_max {
                    out.counts[m][range] += 1;
                }
            }
        }
        out
    });
    let mut tau_sum = vec![0u128; k_max + 1];
    let mut tau_sq = vec![0u128; k_max + 1];
    let mut reached = vec![0u64; k_max + 1];
    let mut range_counts: Vec<Vec<u64>> = (0..k_max).map(|k| vec![0; k + 2]).collect();
    let mut capped = 0;
    for part in parts {
        for k in 0..=k_max {
            tau_sum[k] += part.tau_sum[k];
            tau_sq[k] += part.tau_sq[k];
            reached[k] += part.reached[k];
        }
        for (acc, c) in range_counts.iter_mut().zip(&part.counts) {
            for (a, b) in acc.iter_mut().zip(c) {
                *a += b;
            }
        }
        capped += part.capped;
    }
    let mut mean_tau = vec![0.0; k_max + 1];
    let mut se_tau = vec![0.0; k_max + 1];
    for k in 2..=k_max {
        let m = reached[k];
        if m == 0 {
            continue;
        }
        let mean = tau_sum[k] as f64 / m as f64;
        let var = (tau_sq[k] as f64 / m as f64 - mean * mean).max(0.0);
        mean_tau[k] = mean;
        se_tau[k] = (var / m as f64).sqrt();
    }
    Ok(RangeStats { horizon, replicas, mean_tau, se_tau, range_counts, capped })
}
