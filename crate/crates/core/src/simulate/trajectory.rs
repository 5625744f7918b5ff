use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::rates::Configuration;

/// How a ring at an occupied site was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "target")]
pub enum Outcome {
    Jump(usize),
    Cancelled,
    Disappeared,
    StepCap,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Jump(_) => "jump",
            Outcome::Cancelled => "cancelled",
            Outcome::Disappeared => "disappeared",
            Outcome::StepCap => "step-cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub site: usize,
    /// Ring index at `site`, counted from 1 over all rings of its clock.
    pub ring: u64,
    pub outcome: Outcome,
}

impl Event {
    pub fn apply(&self, conf: &mut Configuration) {
        match self.outcome {
            Outcome::Jump(y) => {
                conf.set(self.site, false);
                conf.set(y, true);
            }
            Outcome::Disappeared => conf.set(self.site, false),
            Outcome::Cancelled | Outcome::StepCap => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub initial: Configuration,
    pub horizon: f64,
    pub events: Vec<Event>,
    /// Configuration at the horizon.
    pub last: Configuration,
}

impl Trajectory {
    pub(crate) fn new(initial: Configuration, horizon: f64) -> Self {
        Trajectory { last: initial.clone(), initial, horizon, events: Vec::new() }
    }

    /// Configuration at time `t` (events at `t` included).
    pub fn state_at(&self, t: f64) -> Configuration {
        let mut c = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            e.apply(&mut c);
        }
        c
    }

    /// Calls `f(state, duration)` for every constant piece on `[0, horizon]`.
    pub fn for_each_piece(&self, mut f: impl FnMut(&Configuration, f64)) {
        let mut c = self.initial.clone();
        let mut t = 0.0;
        for e in &self.events {
            f(&c, e.time - t);
            e.apply(&mut c);
            t = e.time;
        }
        f(&c, self.horizon - t);
    }

    /// Time spent in each configuration, keyed by bitstring.
    pub fn occupation_times(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        self.for_each_piece(|c, dt| *out.entry(c.to_bitstring()).or_insert(0.0) += dt);
        out
    }

    /// Event log as CSV: `time,site,ring,outcome,target`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,site,ring,outcome,target\n");
        for e in &self.events {
            let target = match e.outcome {
                Outcome::Jump(y) => y.to_string(),
                _ => String::new(),
            };
            writeln!(s, "{:.17e},{},{},{},{}", e.time, e.site, e.ring, e.outcome.name(), target).unwrap();
        }
        s
    }

    /// One bitstring per requested time.
    pub fn snapshot_lines(&self, times: &[f64]) -> String {
        let mut s = String::new();
        for &t in times {
            writeln!(s, "{}", self.state_at(t)).unwrap();
        }
        s
    }
}

/// The two marginals of a coupled run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTrajectory {
    pub eta: Trajectory,
    pub xi: Trajectory,
}

impl PairTrajectory {
    /// Distinct event times of either marginal, in order.
    pub fn event_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.eta.events.iter().chain(&self.xi.events).map(|e| e.time).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Pairs `(time, eta, xi)` after each event, starting with time 0.
    pub fn states(&self) -> Vec<(f64, Configuration, Configuration)> {
        let mut out = vec![(0.0, self.eta.initial.clone(), self.xi.initial.clone())];
        let (mut a, mut b) = (self.eta.initial.clone(), self.xi.initial.clone());
        let (mut i, mut j) = (0, 0);
        let (ea, eb) = (&self.eta.events, &self.xi.events);
        while i < ea.len() || j < eb.len() {
            let t = match (ea.get(i), eb.get(j)) {
                (Some(x), Some(y)) => x.time.min(y.time),
                (Some(x), None) => x.time,
                (None, Some(y)) => y.time,
                (None, None) => unreachable!(),
            };
            while i < ea.len() && ea[i].time == t {
                ea[i].apply(&mut a);
                i += 1;
            }
            while j < eb.len() && eb[j].time == t {
                eb[j].apply(&mut b);
                j += 1;
            }
            out.push((t, a.clone(), b.clone()));
        }
        out
    }
}
