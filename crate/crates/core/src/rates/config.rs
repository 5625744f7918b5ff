use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Occupancy vector `eta` over sites `0..N`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    occ: Vec<bool>,
    count: usize,
}

impl Configuration {
    pub fn empty(n: usize) -> Self {
        Configuration { occ: vec![false; n], count: 0 }
    }

    pub fn full(n: usize) -> Self {
        Configuration { occ: vec![true; n], count: n }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        Configuration { occ: bits.to_vec(), count: bits.iter().filter(|&&b| b).count() }
    }

    pub fn from_sites(n: usize, sites: &[usize]) -> Result<Self> {
        let mut c = Self::empty(n);
        for &s in sites {
            if s >= n {
                return Err(Error::invalid(format!("site {s} outside a space of {n} sites")));
            }
            c.set(s, true);
        }
        Ok(c)
    }

    /// Parses `"0110"`; character `i` is site `i`.
    pub fn from_bitstring(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .enumerate()
            .map(|(i, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::invalid(format!("bitstring position {i}: {c:?} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::invalid("empty bitstring"));
        }
        Ok(Self::from_bits(&bits))
    }

    /// Bit `i` of `mask` is site `i`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        assert!(n <= 64);
        Self::from_bits(&(0..n).map(|i| mask >> i & 1 == 1).collect::<Vec<_>>())
    }

    pub fn mask(&self) -> u64 {
        assert!(self.occ.len() <= 64, "mask needs at most 64 sites");
        self.occ.iter().enumerate().fold(0, |m, (i, &b)| m | (b as u64) << i)
    }

    pub fn to_bitstring(&self) -> String {
        self.occ.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_full(&self) -> bool {
        self.count == self.occ.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn get(&self, x: usize) -> bool {
        self.occ[x]
    }

    pub fn value(&self, x: usize) -> f64 {
        if self.occ[x] {
            1.0
        } else {
            0.0
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.occ
    }

    pub fn set(&mut self, x: usize, v: bool) {
        if self.occ[x] != v {
            self.occ[x] = v;
            if v {
                self.count += 1;
            } else {
                self.count -= 1;
            }
        }
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.occ.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn vacant(&self) -> impl Iterator<Item = usize> + '_ {
        self.occ.iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i)
    }

    /// `eta^{xy}`: the states of `x` and `y` interchanged.
    pub fn swap(&self, x: usize, y: usize) -> Self {
        let mut c = self.clone();
        c.occ.swap(x, y);
        c
    }

    /// `eta_x`: site `x` emptied.
    pub fn kill(&self, x: usize) -> Self {
        let mut c = self.clone();
        c.set(x, false);
        c
    }

    /// Site-wise product `eta * xi`.
    pub fn product(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self::from_bits(&self.occ.iter().zip(&other.occ).map(|(a, b)| *a && *b).collect::<Vec<_>>())
    }

    /// `self <= other` site-wise.
    pub fn le(&self, other: &Self) -> bool {
        self.occ.iter().zip(&other.occ).all(|(a, b)| !*a || *b)
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({})", self.to_bitstring())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

impl Serialize for Configuration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bitstring())
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Configuration::from_bitstring(&s).map_err(serde::de::Error::custom)
    }
}

/// Finite site set `R` of a cylinder function `f_R = prod_{x in R} eta(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CylinderSet {
    sites: Vec<usize>,
}

impl CylinderSet {
    pub fn new(sites: &[usize], n: usize) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::invalid("cylinder set must be nonempty"));
        }
        let mut s = sites.to_vec();
        s.sort_unstable();
        s.dedup();
        if let Some(&bad) = s.iter().find(|&&x| x >= n) {
            return Err(Error::invalid(format!("cylinder site {bad} outside a space of {n} sites")));
        }
        Ok(CylinderSet { sites: s })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn contains(&self, x: usize) -> bool {
        self.sites.binary_search(&x).is_ok()
    }

    pub fn eval(&self, eta: &Configuration) -> f64 {
        if self.sites.iter().all(|&x| eta.get(x)) {
            1.0
        } else {
            0.0
        }
    }

    /// All subsets of `0..n` with between 1 and `max_size` sites, in
    /// lexicographic order.
    pub fn all_up_to(n: usize, max_size: usize) -> Vec<CylinderSet> {
        fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<CylinderSet>) {
            for x in start..n {
                cur.push(x);
                out.push(CylinderSet { sites: cur.clone() });
                if left > 1 {
                    rec(x + 1, n, left - 1, cur, out);
                }
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if max_size > 0 {
            rec(0, n, max_size, &mut Vec::new(), &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_and_kill() {
        let eta = Configuration::from_bitstring("1100").unwrap();
        assert_eq!(eta.swap(1, 3).to_bitstring(), "1001");
        assert_eq!(eta.kill(0).to_bitstring(), "0100");
        assert_eq!(eta.kill(0).count(), 1);
        assert_eq!(eta.kill(2), eta);
        assert_eq!(eta.swap(0, 1), eta);
    }

    #[test]
    fn masks_round_trip() {
        let eta = Configuration::from_bitstring("10110").unwrap();
        assert_eq!(eta.mask(), 0b01101);
        assert_eq!(Configuration::from_mask(eta.mask(), 5), eta);
        assert!(Configuration::from_bitstring("10a").is_err());
    }

    #[test]
    fn order_and_product() {
        let a = Configuration::from_bitstring("1010").unwrap();
        let b = Configuration::from_bitstring("1110").unwrap();
        assert!(a.le(&b) && !b.le(&a));
        assert_eq!(a.product(&b), a);
    }

    #[test]
    fn cylinder_enumeration() {
        let all = CylinderSet::all_up_to(4, 2);
        assert_eq!(all.len(), 4 + 6);
        assert!(CylinderSet::new(&[], 3).is_err());
        assert!(CylinderSet::new(&[3], 3).is_err());
        let r = CylinderSet::new(&[2, 0, 2], 3).unwrap();
        assert_eq!(r.sites(), &[0, 2]);
        assert_eq!(r.eval(&Configuration::from_bitstring("101").unwrap()), 1.0);
    }
}
