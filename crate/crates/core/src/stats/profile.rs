use serde::{Deserialize, Serialize};

use crate::coupled::{alternations, positive_in, PairConfiguration};
use crate::error::{Error, Result};
use crate::lattice::SiteSpace;
use crate::rates::Configuration;

fn check(space: &SiteSpace, pair: &PairConfiguration) -> Result<()> {
    if pair.len() != space.len() {
        return Err(Error::invalid(format!("pair has {} sites, space has {}", pair.len(), space.len())));
    }
    Ok(())
}

/// Positive discrepancies in `[-n, n]`.
pub fn f_n(space: &SiteSpace, pair: &PairConfiguration, n: usize) -> Result<usize> {
    check(space, pair)?;
    Ok(positive_in(pair, &space.window(n)?))
}

/// `+1 -> -1` alternations of the discrepancy field across `[-n, n]`.
pub fn g_n(space: &SiteSpace, pair: &PairConfiguration, n: usize) -> Result<usize> {
    g_interval(space, pair, -(n as i64), n as i64)
}

/// Alternations across `[a, b]`.
pub fn g_interval(space: &SiteSpace, pair: &PairConfiguration, a: i64, b: i64) -> Result<usize> {
    check(space, pair)?;
    Ok(alternations(pair, &space.interval(a, b)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyProfile {
    pub n: usize,
    pub f_n: usize,
    pub g_n: usize,
    /// Positions `x` in the window where a `+1` is followed, after zeros
    /// only, by a `-1`.
    pub sign_changes: Vec<i64>,
}

pub fn discrepancy_profile(space: &SiteSpace, pair: &PairConfiguration, n: usize) -> Result<DiscrepancyProfile> {
    check(space, pair)?;
    let sites = space.window(n)?;
    let mut sign_changes = Vec::new();
    let mut last: Option<(i8, usize)> = None;
    for &s in &sites {
        let d = pair.discrepancy(s);
        if d == 0 {
            continue;
        }
        if let Some((1, from)) = last {
            if d < 0 {
                sign_changes.push(space.position(from));
            }
        }
        last = Some((d, s));
    }
    Ok(DiscrepancyProfile {
        n,
        f_n: positive_in(pair, &sites),
        g_n: sign_changes.len(),
        sign_changes,
    })
}

/// The `k`-partition of `[-n, n]` into blocks `[x_i, y_i]`.
pub fn k_partition(n: usize, k: usize) -> Result<Vec<(i64, i64)>> {
    if n == 0 || k == 0 {
        return Err(Error::invalid("k-partition needs n >= 1 and k >= 1"));
    }
    let (n, k) = (n as i64, k as i64);
    let mut out = Vec::new();
    let mut x = -n;
    loop {
        let y = (x + k).min(n);
        out.push((x, y));
        if y == n {
            break;
        }
        x = y + 1;
    }
    Ok(out)
}

/// Both sides of `g_n <= sum_i g_{x_i, y_i} + m - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionCheck {
    pub g_n: usize,
    pub bound: usize,
}

impl PartitionCheck {
    pub fn holds(&self) -> bool {
        self.g_n <= self.bound
    }
}

pub fn partition_check(space: &SiteSpace, pair: &PairConfiguration, n: usize, k: usize) -> Result<PartitionCheck> {
    let blocks = k_partition(n, k)?;
    let mut bound = blocks.len() - 1;
    for &(a, b) in &blocks {
        bound += g_interval(space, pair, a, b)?;
    }
    Ok(PartitionCheck { g_n: g_n(space, pair, n)?, bound })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityProfile {
    pub radii: Vec<usize>,
    pub averages: Vec<f64>,
    /// Largest and smallest average over the radii.
    pub upper: f64,
    pub lower: f64,
}

/// Block averages of `eta` over the balls `|x_i| <= n`.
pub fn density_bounds(space: &SiteSpace, eta: &Configuration, radii: &[usize]) -> Result<DensityProfile> {
    if eta.len() != space.len() {
        return Err(Error::invalid("configuration does not match the space"));
    }
    if radii.is_empty() {
        return Err(Error::invalid("density bounds need at least one radius"));
    }
    let averages: Vec<f64> = radii
        .iter()
        .map(|&n| {
            let ball = space.ball(n);
            ball.iter().filter(|&&s| eta.get(s)).count() as f64 / ball.len() as f64
        })
        .collect();
    Ok(DensityProfile {
        radii: radii.to_vec(),
        upper: averages.iter().copied().fold(f64::MIN, f64::max),
        lower: averages.iter().copied().fold(f64::MAX, f64::min),
        averages,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunVariant {
    /// All sites of the interval occupied.
    S,
    /// All sites other than `x` occupied.
    SPrime,
}

/// Length of the longest interval through `x` occupied by `eta` (with `x`
/// itself exempt for [`RunVariant::SPrime`]).
pub fn run_length(space: &SiteSpace, eta: &Configuration, x: usize, variant: RunVariant) -> Result<usize> {
    if space.dim() != 1 || eta.len() != space.len() || x >= space.len() {
        return Err(Error::precondition("run lengths need a one-dimensional space and a site in it"));
    }
    if variant == RunVariant::S && !eta.get(x) {
        return Ok(0);
    }
    let n = space.len();
    let px = space.position(x);
    let mut len = 1;
    for dir in [1i64, -1] {
        let mut d = 1;
        while len < n {
            match space.site_at(px + dir * d) {
                Some(s) if eta.get(s) => {
                    len += 1;
                    d += 1;
                }
                _ => break,
            }
        }
    }
    Ok(len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    fn seg(n: i64) -> SiteSpace {
        SiteSpace::segment(-n, n, Boundary::OpenEscape).unwrap()
    }

    #[test]
    fn counts_on_small_windows() {
        let s = seg(1);
        let p = PairConfiguration::from_bitstrings("100", "001").unwrap();
        assert_eq!(f_n(&s, &p, 1).unwrap(), 1);
        assert_eq!(g_n(&s, &p, 1).unwrap(), 1);
        let s2 = SiteSpace::segment(-2, 1, Boundary::OpenEscape).unwrap();
        let p2 = PairConfiguration::from_bitstrings("1010", "0101").unwrap();
        assert_eq!(g_interval(&s2, &p2, -2, 1).unwrap(), 2);
        let prof = discrepancy_profile(&seg(2), &PairConfiguration::from_bitstrings("10100", "00001").unwrap(), 2).unwrap();
        assert_eq!(prof.sign_changes, vec![0]);
    }

    #[test]
    fn partitions() {
        assert_eq!(k_partition(3, 2).unwrap(), vec![(-3, -1), (0, 2), (3, 3)]);
        assert_eq!(k_partition(3, 6).unwrap(), vec![(-3, 3)]);
        assert_eq!(k_partition(3, 9).unwrap(), vec![(-3, 3)]);
        assert!(k_partition(0, 1).is_err());
    }

    #[test]
    fn densities() {
        let s = seg(10);
        let full = Configuration::full(21);
        assert!(density_bounds(&s, &full, &[1, 5, 10]).unwrap().averages.iter().all(|&a| a == 1.0));
        let alt = Configuration::from_bits(&(0..21).map(|i| i % 2 == 0).collect::<Vec<_>>());
        for (n, a) in [3usize, 6, 10].iter().zip(density_bounds(&s, &alt, &[3, 6, 10]).unwrap().averages) {
            assert!((a - 0.5).abs() <= 1.0 / (2 * n + 1) as f64);
        }
    }

    #[test]
    fn runs() {
        let s = seg(3);
        let empty = Configuration::empty(7);
        assert_eq!(run_length(&s, &empty, 3, RunVariant::S).unwrap(), 0);
        assert_eq!(run_length(&s, &empty, 3, RunVariant::SPrime).unwrap(), 1);
        assert_eq!(run_length(&s, &Configuration::full(7), 3, RunVariant::S).unwrap(), 7);
        let eta = Configuration::from_bitstring("0011100").unwrap();
        assert_eq!(run_length(&s, &eta, 3, RunVariant::S).unwrap(), 3);
        let gap = Configuration::from_bitstring("0110110").unwrap();
        assert_eq!(run_length(&s, &gap, 3, RunVariant::SPrime).unwrap(), 5);
        let ring = SiteSpace::ring(5).unwrap();
        assert_eq!(run_length(&ring, &Configuration::full(5), 0, RunVariant::S).unwrap(), 5);
    }
}
