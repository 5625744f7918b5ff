use std::fmt::Write;

use lrep::acceptance::{run_acceptance, AcceptanceOptions, AcceptanceReport};
use lrep::coupled::{coupled_rates, PairConfiguration};
use lrep::exact::{build_generator, ordered_absorption_report, stationary, transition_row, GeneratorMatrix, Measure, Mode};
use lrep::lattice::Kernel;
use lrep::parallel;
use lrep::rates::{rate_report, Configuration};
use lrep::rng::{self, StreamRng};
use lrep::simulate::{run_single, RngPlan};
use lrep::stats::{bernoulli_configuration, ordered_fraction};
use lrep::{Error, Result};
use rand::seq::index::sample;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, InitialSpec};

/// Named outputs of one command plus an optional JSON summary.
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub summary: Value,
    /// False when the command ran but its checks did not all pass.
    pub ok: bool,
}

impl Artifacts {
    fn new(summary: Value) -> Self {
        Artifacts { files: Vec::new(), summary, ok: true }
    }

    fn add(&mut self, name: &str, text: String) {
        self.files.push((name.into(), text));
    }
}

const GRID_POINTS: usize = 11;

fn grid(horizon: f64) -> Vec<f64> {
    (0..GRID_POINTS).map(|i| horizon * i as f64 / (GRID_POINTS - 1) as f64).collect()
}

fn e17(v: f64) -> String {
    format!("{v:.17e}")
}

/// One configuration for commands that need exactly one.
fn single_initial(cfg: &ExperimentConfig, n: usize, r: &mut StreamRng) -> Result<Configuration> {
    match cfg.initial.as_ref().expect("resolved") {
        InitialSpec::Bitstring(s) => Configuration::from_bitstring(s),
        InitialSpec::Bernoulli(rho) => Ok(bernoulli_configuration(n, *rho, r)),
        InitialSpec::Shell(k) => Configuration::from_sites(n, &sample(r, n, *k).into_vec()),
        InitialSpec::Pair { .. } => Err(Error::Invalid("expected a single configuration".into())),
    }
}

fn initial_pair(cfg: &ExperimentConfig) -> Result<PairConfiguration> {
    match cfg.initial.as_ref().expect("resolved") {
        InitialSpec::Pair { eta, xi } => PairConfiguration::from_bitstrings(eta, xi),
        _ => Err(Error::Invalid("expected an initial pair".into())),
    }
}

pub fn rates(cfg: &ExperimentConfig, kernel: &Kernel, site: Option<usize>) -> Result<Artifacts> {
    let eta = single_initial(cfg, kernel.len(), &mut rng::stream(cfg.seed, 0))?;
    let sources: Vec<usize> = match site {
        Some(x) if x >= kernel.len() => return Err(Error::Invalid(format!("site {x} outside the space"))),
        Some(x) => vec![x],
        None => eta.occupied().collect(),
    };
    let mut csv = String::from("source,kind,target,value\n");
    let mut reports = Vec::new();
    for x in sources {
        let r = rate_report(kernel, x, &eta)?;
        for t in &r.targets {
            writeln!(csv, "{x},q,{},{}", t.site, e17(t.q)).unwrap();
            writeln!(csv, "{x},q_bar,{},{}", t.site, e17(t.q_bar)).unwrap();
        }
        writeln!(csv, "{x},cancel,{x},{}", e17(r.cancel)).unwrap();
        writeln!(csv, "{x},delta,,{}", e17(r.delta)).unwrap();
        reports.push(r);
    }
    let mut a = Artifacts::new(json!({ "configuration": eta.to_bitstring(), "reports": reports }));
    a.add("rates.csv", csv);
    Ok(a)
}

fn shell_for(cfg: &ExperimentConfig, kernel: &Kernel) -> Result<Option<Vec<usize>>> {
    let conserving = kernel.space().is_torus();
    Ok(match cfg.initial.as_ref().expect("resolved") {
        InitialSpec::Shell(k) => Some(vec![*k]),
        InitialSpec::Bitstring(s) if conserving => Some(vec![Configuration::from_bitstring(s)?.count()]),
        InitialSpec::Pair { .. } if conserving => {
            let p = initial_pair(cfg)?;
            let mut s = vec![p.eta.count(), p.xi.count()];
            s.dedup();
            Some(s)
        }
        _ => None,
    })
}

fn stationary_csv(q: &GeneratorMatrix) -> Result<(String, Value)> {
    let classes = stationary(q)?;
    let mut csv = String::from("class,state,probability\n");
    let mut meta = Vec::new();
    for (c, class) in classes.iter().enumerate() {
        for &i in &class.states {
            writeln!(csv, "{c},{},{}", q.label(i), e17(class.measure.probs[i])).unwrap();
        }
        meta.push(json!({ "class": c, "states": class.states.len(), "residual": class.residual }));
    }
    Ok((csv, Value::Array(meta)))
}

pub fn exact(cfg: &ExperimentConfig, kernel: &Kernel) -> Result<Artifacts> {
    let coupled = matches!(cfg.initial, Some(InitialSpec::Pair { .. }));
    let mode = if coupled { Mode::Coupled } else { Mode::Single };
    let shell = shell_for(cfg, kernel)?;
    let q = build_generator(kernel, mode, shell.as_deref())?;
    let (stat, classes) = stationary_csv(&q)?;
    let mut summary = json!({ "mode": format!("{mode:?}"), "states": q.len(), "classes": classes });
    let mut files = vec![("generator.txt".to_string(), q.to_coordinate_text()), ("stationary.csv".to_string(), stat)];
    if coupled {
        summary["ordered_absorption"] = serde_json::to_value(ordered_absorption_report(kernel, &q)?).expect("serializes");
    }
    if cfg.horizon > 0.0 {
        let law = match cfg.initial.as_ref().expect("resolved") {
            InitialSpec::Bitstring(s) => {
                let i = q.index_of(&Configuration::from_bitstring(s)?).expect("initial state is enumerated");
                Some(transition_row(&q, i, cfg.horizon)?)
            }
            InitialSpec::Pair { .. } => {
                let i = q.index_of_pair(&initial_pair(cfg)?).expect("initial pair is enumerated");
                Some(transition_row(&q, i, cfg.horizon)?)
            }
            InitialSpec::Bernoulli(rho) => {
                let mu = Measure::bernoulli(&q, *rho)?;
                let mut out = vec![0.0; q.len()];
                for (i, &p) in mu.probs.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                    for (j, v) in transition_row(&q, i, cfg.horizon)?.into_iter().enumerate() {
                        out[j] += p * v;
                    }
                }
                Some(out)
            }
            InitialSpec::Shell(_) => None,
        };
        if let Some(law) = law {
            files.push(("transition.csv".into(), Measure { probs: law }.to_csv(&q)));
        }
    }
    let mut a = Artifacts::new(summary);
    a.files = files;
    Ok(a)
}

pub fn simulate(cfg: &ExperimentConfig, kernel: &Kernel) -> Result<Artifacts> {
    let n = kernel.len();
    let times = grid(cfg.horizon);
    let runs: Vec<Result<(String, Vec<f64>, usize)>> = parallel::map_indexed(cfg.replicas, |i| {
        let s = rng::child_seed(cfg.seed, i as u64);
        let eta = single_initial(cfg, n, &mut rng::stream(s, u64::MAX))?;
        let t = run_single(kernel, &eta, cfg.horizon, &RngPlan::new(s))?;
        let mut events = String::new();
        for line in t.to_csv().lines().skip(1) {
            writeln!(events, "{i},{line}").unwrap();
        }
        let density = times.iter().map(|&u| t.state_at(u).count() as f64 / n as f64).collect();
        Ok((events, density, t.events.len()))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut events = String::from("replica,time,site,ring,outcome,target\n");
    let mut total_events = 0;
    for (e, _, k) in &runs {
        events.push_str(e);
        total_events += k;
    }
    let mut density = String::from("t,estimate,stderr\n");
    let m = runs.len() as f64;
    for (g, &t) in times.iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|r| r.1[g]).collect();
        let mean = xs.iter().sum::<f64>() / m;
        let var = if runs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
        writeln!(density, "{},{},{}", e17(t), e17(mean), e17((var / m).sqrt())).unwrap();
    }
    let mut a = Artifacts::new(json!({
        "replicas": cfg.replicas,
        "horizon": cfg.horizon,
        "mean_events": total_events as f64 / m,
    }));
    a.add("events.csv", events);
    a.add("density.csv", density);
    Ok(a)
}

pub fn couple(cfg: &ExperimentConfig, kernel: &Kernel) -> Result<Artifacts> {
    let pair = initial_pair(cfg)?;
    let mut rates = String::from("source,family,equation,y,z,rate\n");
    let opt = |v: Option<usize>| v.map(|s| s.to_string()).unwrap_or_default();
    for x in (0..pair.len()).filter(|&x| pair.eta.get(x) || pair.xi.get(x)) {
        let rep = coupled_rates(kernel, x, &pair)?;
        for e in &rep.entries {
            writeln!(rates, "{x},{:?},{},{},{},{}", e.family, e.equation, opt(e.y), opt(e.z), e17(e.rate)).unwrap();
        }
        writeln!(rates, "{x},Cancel,,,,{}", e17(rep.cancel)).unwrap();
    }
    let times = grid(cfg.horizon);
    let of = ordered_fraction(kernel, |_| pair.clone(), cfg.horizon, &times, cfg.replicas, cfg.seed)?;
    let mut ordered = String::from("t,estimate,stderr\n");
    for ((t, p), se) in of.grid.iter().zip(&of.fraction).zip(&of.stderr) {
        writeln!(ordered, "{},{},{}", e17(*t), e17(*p), e17(*se)).unwrap();
    }
    let traj = lrep::simulate::run_coupled(kernel, &pair, cfg.horizon, &RngPlan::new(rng::child_seed(cfg.seed, 0)))?;
    let mut states = String::from("time,eta,xi\n");
    for (t, a, b) in traj.states() {
        writeln!(states, "{},{a},{b}", e17(t)).unwrap();
    }
    let mut a = Artifacts::new(json!({
        "pair": pair.label(),
        "replicas": of.replicas,
        "mean_ordering_time": if of.mean_ordering_time.is_finite() { json!(of.mean_ordering_time) } else { Value::Null },
        "never_ordered": of.never_ordered,
        "order_violations": of.order_violations,
    }));
    a.add("coupled_rates.csv", rates);
    a.add("ordered.csv", ordered);
    a.add("pair_trajectory.csv", states);
    Ok(a)
}

pub fn acceptance(cfg: &ExperimentConfig) -> Result<(Artifacts, AcceptanceReport)> {
    let report = run_acceptance(&AcceptanceOptions {
        seed: cfg.seed,
        criteria: cfg.criteria.clone(),
        fault_injection: cfg.fault_injection,
    })?;
    let mut a = Artifacts::new(serde_json::to_value(&report).expect("serializes"));
    a.ok = report.all_pass();
    a.add("acceptance.csv", report.to_csv());
    a.add("acceptance.json", report.to_json() + "\n");
    Ok((a, report))
}
