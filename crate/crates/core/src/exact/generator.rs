use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::coupled::{coupled_transitions, PairConfiguration};
use crate::error::{Error, Result};
use crate::lattice::Kernel;
use crate::parallel;
use crate::rates::{transitions, Configuration};

pub const MAX_SINGLE_SITES: usize = 14;
pub const MAX_COUPLED_SITES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    Coupled,
}

/// Intensity matrix of the exclusion chain (or of the coupled chain) over an
/// enumerated state list.
///
/// States are ordered lexicographically by bitstring; coupled states by the
/// `eta` bitstring, then the `xi` bitstring.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    sites: usize,
    mode: Mode,
    keys: Vec<u64>,
    index: HashMap<u64, usize>,
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

fn key_of_pair(eta: &Configuration, xi: &Configuration) -> u64 {
    eta.mask() | xi.mask() << 32
}

fn bitstring(mask: u64, n: usize) -> String {
    (0..n).map(|i| if mask >> i & 1 == 1 { '1' } else { '0' }).collect()
}

/// Masks over `n` sites whose popcount is in `shell` (all when `None`), in
/// bitstring order.
fn masks(n: usize, shell: Option<&[usize]>) -> Vec<u64> {
    let mut out: Vec<u64> = (0..1u64 << n)
        .filter(|m| shell.is_none_or(|s| s.contains(&(m.count_ones() as usize))))
        .collect();
    out.sort_by_cached_key(|&m| bitstring(m, n));
    out
}

impl GeneratorMatrix {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn label(&self, i: usize) -> String {
        let k = self.keys[i];
        match self.mode {
            Mode::Single => bitstring(k, self.sites),
            Mode::Coupled => format!("{}/{}", bitstring(k & 0xffff_ffff, self.sites), bitstring(k >> 32, self.sites)),
        }
    }

    pub fn configuration(&self, i: usize) -> Configuration {
        assert_eq!(self.mode, Mode::Single);
        Configuration::from_mask(self.keys[i], self.sites)
    }

    pub fn pair(&self, i: usize) -> PairConfiguration {
        assert_eq!(self.mode, Mode::Coupled);
        let k = self.keys[i];
        PairConfiguration {
            eta: Configuration::from_mask(k & 0xffff_ffff, self.sites),
            xi: Configuration::from_mask(k >> 32, self.sites),
        }
    }

    pub fn index_of(&self, conf: &Configuration) -> Option<usize> {
        (self.mode == Mode::Single && conf.len() == self.sites).then(|| self.index.get(&conf.mask()).copied())?
    }

    pub fn index_of_pair(&self, pair: &PairConfiguration) -> Option<usize> {
        (self.mode == Mode::Coupled && pair.len() == self.sites)
            .then(|| self.index.get(&key_of_pair(&pair.eta, &pair.xi)).copied())?
    }

    /// Index of a state given by its label (bitstring, or `eta/xi`).
    pub fn find(&self, label: &str) -> Result<usize> {
        let found = match self.mode {
            Mode::Single => self.index_of(&Configuration::from_bitstring(label)?),
            Mode::Coupled => {
                let (a, b) = label
                    .split_once('/')
                    .ok_or_else(|| Error::invalid(format!("coupled state {label:?} must look like eta/xi")))?;
                self.index_of_pair(&PairConfiguration::from_bitstrings(a, b)?)
            }
        };
        found.ok_or_else(|| Error::invalid(format!("state {label} is not in the enumerated state list")))
    }

    /// Off-diagonal entries of row `i`, by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.rows[i].iter().find(|(c, _)| *c == j).map_or(0.0, |(_, r)| *r)
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().map(|d| -d).fold(0.0, f64::max)
    }

    /// `v Q`.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for (i, row) in self.rows.iter().enumerate() {
            if v[i] == 0.0 {
                continue;
            }
            for &(j, r) in row {
                out[j] += v[i] * r;
            }
        }
        out
    }

    /// Largest absolute row sum.
    pub fn row_sum_residual(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.diag)
            .map(|(row, d)| (row.iter().map(|(_, r)| r).sum::<f64>() + d).abs())
            .fold(0.0, f64::max)
    }

    /// Coordinate text: one `row col rate` line per nonzero entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.len() {
            let mut entries: Vec<(usize, f64)> = self.rows[i].clone();
            if self.diag[i] != 0.0 {
                entries.push((i, self.diag[i]));
            }
            entries.sort_by_key(|e| e.0);
            for (j, r) in entries {
                writeln!(s, "{i} {j} {r:.17e}").unwrap();
            }
        }
        s
    }

    pub(crate) fn from_rows(sites: usize, mode: Mode, keys: Vec<u64>, raw: Vec<Vec<(u64, f64)>>) -> Result<Self> {
        let index: HashMap<u64, usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let mut rows = Vec::with_capacity(keys.len());
        let mut diag = Vec::with_capacity(keys.len());
        for (i, list) in raw.into_iter().enumerate() {
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(list.len());
            for (k, r) in list {
                let j = *index.get(&k).ok_or_else(|| {
                    Error::precondition(format!(
                        "a transition from state {i} leaves the enumerated states; the dynamics do not conserve the shell"
                    ))
                })?;
                if j == i || r == 0.0 {
                    continue;
                }
                match merged.iter_mut().find(|(c, _)| *c == j) {
                    Some(slot) => slot.1 += r,
                    None => merged.push((j, r)),
                }
            }
            merged.sort_by_key(|e| e.0);
            diag.push(-merged.iter().map(|(_, r)| r).sum::<f64>());
            rows.push(merged);
        }
        Ok(GeneratorMatrix { sites, mode, keys, index, rows, diag })
    }
}

/// Intensity matrix with every off-diagonal entry taken from the exact rate
/// solvers. `shell` restricts to the listed particle counts (of each
/// marginal in coupled mode).
pub fn build_generator(kernel: &Kernel, mode: Mode, shell: Option<&[usize]>) -> Result<GeneratorMatrix> {
    let n = kernel.len();
    let limit = match mode {
        Mode::Single => MAX_SINGLE_SITES,
        Mode::Coupled => MAX_COUPLED_SITES,
    };
    if n > limit {
        return Err(Error::TooLarge(format!("{mode:?} enumeration allows at most {limit} sites, got {n}")));
    }
    if let Some(s) = shell {
        if let Some(&k) = s.iter().find(|&&k| k > n) {
            return Err(Error::invalid(format!("shell {k} exceeds the {n} sites")));
        }
    }
    let single = masks(n, shell);
    let keys: Vec<u64> = match mode {
        Mode::Single => single,
        Mode::Coupled => single.iter().flat_map(|&a| single.iter().map(move |&b| a | b << 32)).collect(),
    };
    let raw: Vec<Result<Vec<(u64, f64)>>> = parallel::map_indexed(keys.len(), |i| {
        let k = keys[i];
        match mode {
            Mode::Single => Ok(transitions(kernel, &Configuration::from_mask(k, n))?
                .into_iter()
                .map(|(c, r)| (c.mask(), r))
                .collect()),
            Mode::Coupled => {
                let pair = PairConfiguration {
                    eta: Configuration::from_mask(k & 0xffff_ffff, n),
                    xi: Configuration::from_mask(k >> 32, n),
                };
                Ok(coupled_transitions(kernel, &pair)?
                    .into_iter()
                    .map(|(p, r, _)| (key_of_pair(&p.eta, &p.xi), r))
                    .collect())
            }
        }
    });
    let raw = raw.into_iter().collect::<Result<Vec<_>>>()?;
    GeneratorMatrix::from_rows(n, mode, keys, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Offsets, SiteSpace};

    fn ring(n: usize, steps: &[(i64, f64)]) -> Kernel {
        Kernel::from_offsets(&SiteSpace::ring(n).unwrap(), &Offsets::one_dim(steps).unwrap()).unwrap()
    }

    #[test]
    fn two_site_shell() {
        let k = ring(2, &[(1, 0.5), (-1, 0.5)]);
        let q = build_generator(&k, Mode::Single, Some(&[1])).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.label(0), "01");
        assert_eq!(q.rate(0, 1), 1.0);
        assert_eq!(q.rate(1, 1), -1.0);
    }

    #[test]
    fn ordering_and_zero_full_row() {
        let k = ring(3, &[(1, 0.7), (-1, 0.3)]);
        let q = build_generator(&k, Mode::Single, None).unwrap();
        let labels: Vec<String> = (0..q.len()).map(|i| q.label(i)).collect();
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(labels, sorted);
        let full = q.find("111").unwrap();
        assert!(q.row(full).is_empty() && q.diagonal(full) == 0.0);
        assert!(q.row_sum_residual() < 1e-12);
    }

    #[test]
    fn coupled_diagonal_reproduces_single() {
        let k = ring(4, &[(1, 0.7), (-1, 0.3)]);
        let single = build_generator(&k, Mode::Single, None).unwrap();
        let coupled = build_generator(&k, Mode::Coupled, None).unwrap();
        for i in 0..single.len() {
            let c = single.configuration(i);
            let ci = coupled.index_of_pair(&PairConfiguration::diagonal(c.clone())).unwrap();
            for &(j, r) in single.row(i) {
                let cj = coupled.index_of_pair(&PairConfiguration::diagonal(single.configuration(j))).unwrap();
                assert!((coupled.rate(ci, cj) - r).abs() < 1e-14);
            }
            assert!((coupled.diagonal(ci) - single.diagonal(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn limits_and_shell_leaks() {
        let k = ring(15, &[(1, 0.5), (-1, 0.5)]);
        assert!(matches!(build_generator(&k, Mode::Single, None), Err(Error::TooLarge(_))));
        let seg = Kernel::from_offsets(
            &SiteSpace::segment(0, 3, crate::lattice::Boundary::OpenEscape).unwrap(),
            &Offsets::nearest_neighbor(0.5).unwrap(),
        )
        .unwrap();
        assert!(matches!(build_generator(&seg, Mode::Single, Some(&[2])), Err(Error::Precondition(_))));
        assert!(build_generator(&seg, Mode::Single, None).is_ok());
    }
}
