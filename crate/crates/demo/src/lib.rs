//! Browser bindings. Every export takes plain numbers and strings and returns
//! a JSON document, so the page needs no generated types.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use lrep::coupled::PairConfiguration;
use lrep::lattice::{Kernel, KernelSpec, SiteSpace};
use lrep::rates::{rate_report, Configuration};
use lrep::rng;
use lrep::simulate::{run_coupled, run_single, RngPlan};
use rand::Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// `offsets` is a JSON list of `[step, probability]` pairs.
fn ring_kernel(n: usize, offsets: &str) -> Result<Kernel, String> {
    let spec: KernelSpec = serde_json::from_str(&format!(r#"{{"offsets": {offsets}}}"#)).map_err(|e| e.to_string())?;
    let space = SiteSpace::ring(n).map_err(|e| e.to_string())?;
    Kernel::from_spec(&space, &spec).map_err(|e| e.to_string())
}

fn frame_times(horizon: f64, frames: usize) -> Result<Vec<f64>, String> {
    if !(horizon > 0.0) || !horizon.is_finite() || !(2..=2000).contains(&frames) {
        return Err("need a positive horizon and 2 to 2000 frames".into());
    }
    Ok((0..frames).map(|i| horizon * i as f64 / (frames - 1) as f64).collect())
}

pub fn space_time_json(n: usize, offsets: &str, density: f64, horizon: f64, frames: usize, seed: u64) -> Result<String, String> {
    let k = ring_kernel(n, offsets)?;
    if !(0.0..=1.0).contains(&density) {
        return Err(format!("density {density} outside [0, 1]"));
    }
    let mut r = rng::stream(seed, u64::MAX);
    let bits: Vec<bool> = (0..n).map(|_| r.random_bool(density)).collect();
    let t = run_single(&k, &Configuration::from_bits(&bits), horizon, &RngPlan::new(seed)).map_err(|e| e.to_string())?;
    let rows: Vec<String> = frame_times(horizon, frames)?.iter().map(|&u| t.state_at(u).to_bitstring()).collect();
    Ok(json!({ "rows": rows, "events": t.events.len() }).to_string())
}

pub fn rates_json(n: usize, offsets: &str, configuration: &str, site: usize) -> Result<String, String> {
    let k = ring_kernel(n, offsets)?;
    let eta = Configuration::from_bitstring(configuration).map_err(|e| e.to_string())?;
    if eta.len() != n {
        return Err(format!("configuration has {} sites, ring has {n}", eta.len()));
    }
    let rep = rate_report(&k, site, &eta).map_err(|e| e.to_string())?;
    serde_json::to_string(&rep).map_err(|e| e.to_string())
}

pub fn coupled_json(n: usize, offsets: &str, eta: &str, xi: &str, horizon: f64, frames: usize, seed: u64) -> Result<String, String> {
    let k = ring_kernel(n, offsets)?;
    let pair = PairConfiguration::from_bitstrings(eta, xi).map_err(|e| e.to_string())?;
    if pair.len() != n {
        return Err(format!("pair has {} sites, ring has {n}", pair.len()));
    }
    let t = run_coupled(&k, &pair, horizon, &RngPlan::new(seed)).map_err(|e| e.to_string())?;
    let rows: Vec<_> = frame_times(horizon, frames)?
        .iter()
        .map(|&u| {
            let p = PairConfiguration::new(t.eta.state_at(u), t.xi.state_at(u)).expect("same length");
            let field: String = (0..n)
                .map(|x| match p.discrepancy(x) {
                    1 => '+',
                    -1 => '-',
                    _ if p.eta.get(x) => '1',
                    _ => '0',
                })
                .collect();
            json!({ "t": u, "field": field, "ordered": p.ordered() })
        })
        .collect();
    Ok(json!({ "rows": rows }).to_string())
}

#[wasm_bindgen]
pub fn space_time(n: usize, offsets: &str, density: f64, horizon: f64, frames: usize, seed: u64) -> Result<String, JsValue> {
    space_time_json(n, offsets, density, horizon, frames, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rates(n: usize, offsets: &str, configuration: &str, site: usize) -> Result<String, JsValue> {
    rates_json(n, offsets, configuration, site).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn coupled(n: usize, offsets: &str, eta: &str, xi: &str, horizon: f64, frames: usize, seed: u64) -> Result<String, JsValue> {
    coupled_json(n, offsets, eta, xi, horizon, frames, seed).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NN: &str = "[[1, 0.5], [-1, 0.5]]";

    #[test]
    fn space_time_conserves_particles() {
        let v: serde_json::Value = serde_json::from_str(&space_time_json(30, NN, 0.4, 5.0, 20, 1).unwrap()).unwrap();
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 20);
        let count = |r: &serde_json::Value| r.as_str().unwrap().chars().filter(|&c| c == '1').count();
        assert!(rows.iter().all(|r| count(r) == count(&rows[0])));
    }

    #[test]
    fn rates_sum_to_one() {
        let v: serde_json::Value = serde_json::from_str(&rates_json(6, "[[1, 0.7], [-2, 0.3]]", "110100", 1).unwrap()).unwrap();
        let total: f64 = v["targets"].as_array().unwrap().iter().map(|t| t["q"].as_f64().unwrap()).sum::<f64>()
            + v["cancel"].as_f64().unwrap()
            + v["delta"].as_f64().unwrap();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupled_run_reports_frames() {
        let v: serde_json::Value = serde_json::from_str(&coupled_json(8, NN, "11001000", "10010100", 4.0, 9, 3).unwrap()).unwrap();
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows[0]["field"], "1+0-+-00");
        assert_eq!(rows[0]["ordered"], false);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(rates_json(6, "[[1, 0.5]]", "110100", 1).is_err());
        assert!(space_time_json(6, NN, 2.0, 1.0, 5, 0).is_err());
    }
}
