use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What happens to a walk that steps off a finite segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Every site outside the segment is deemed occupied; the walk keeps going.
    OccupiedExterior,
    /// Leaving the segment is a disappearance.
    #[default]
    OpenEscape,
}

/// Which end of a segment a walk left through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpaceSpec {
    Torus(Vec<usize>),
    Segment {
        lo: i64,
        hi: i64,
        #[serde(default)]
        boundary: Boundary,
    },
}

/// A finite site set `0..N` with a coordinate map.
///
/// Tori wrap every coordinate; segments are one-dimensional windows `lo..=hi`
/// of the integer line, with a [`Boundary`] policy for steps that leave them.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSpace {
    mode: Mode,
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Mode {
    Torus { dims: Vec<usize> },
    Segment { lo: i64, boundary: Boundary },
}

/// Where a single step from a site lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Landing {
    Site(usize),
    Exterior(Side),
}

impl SiteSpace {
    pub fn torus(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::invalid("torus dimensions must be positive"));
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid("torus too large"))?;
        Ok(SiteSpace { mode: Mode::Torus { dims: dims.to_vec() }, len })
    }

    /// One-dimensional torus `Z_n`.
    pub fn ring(n: usize) -> Result<Self> {
        Self::torus(&[n])
    }

    pub fn segment(lo: i64, hi: i64, boundary: Boundary) -> Result<Self> {
        if hi < lo {
            return Err(Error::invalid(format!("empty segment [{lo}, {hi}]")));
        }
        let len = (hi - lo + 1) as usize;
        Ok(SiteSpace { mode: Mode::Segment { lo, boundary }, len })
    }

    pub fn from_spec(spec: &SpaceSpec) -> Result<Self> {
        match spec {
            SpaceSpec::Torus(dims) => Self::torus(dims),
            SpaceSpec::Segment { lo, hi, boundary } => Self::segment(*lo, *hi, *boundary),
        }
    }

    pub fn to_spec(&self) -> SpaceSpec {
        match &self.mode {
            Mode::Torus { dims } => SpaceSpec::Torus(dims.clone()),
            Mode::Segment { lo, boundary } => SpaceSpec::Segment {
                lo: *lo,
                hi: *lo + self.len as i64 - 1,
                boundary: *boundary,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        match &self.mode {
            Mode::Torus { dims } => dims.len(),
            Mode::Segment { .. } => 1,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.mode, Mode::Torus { .. })
    }

    pub fn boundary(&self) -> Option<Boundary> {
        match &self.mode {
            Mode::Segment { boundary, .. } => Some(*boundary),
            Mode::Torus { .. } => None,
        }
    }

    /// Segment bounds `(lo, hi)`, if this is a segment.
    pub fn bounds(&self) -> Option<(i64, i64)> {
        match &self.mode {
            Mode::Segment { lo, .. } => Some((*lo, *lo + self.len as i64 - 1)),
            Mode::Torus { .. } => None,
        }
    }

    pub fn coord(&self, site: usize) -> Vec<i64> {
        assert!(site < self.len, "site {site} out of range");
        match &self.mode {
            Mode::Torus { dims } => {
                let mut rest = site;
                let mut out = vec![0; dims.len()];
                for (k, &d) in dims.iter().enumerate().rev() {
                    out[k] = (rest % d) as i64;
                    rest /= d;
                }
                out
            }
            Mode::Segment { lo, .. } => vec![lo + site as i64],
        }
    }

    /// Site at a coordinate. Tori reduce modulo their dimensions; segments
    /// return `None` off the window.
    pub fn index(&self, coord: &[i64]) -> Option<usize> {
        match &self.mode {
            Mode::Torus { dims } => {
                if coord.len() != dims.len() {
                    return None;
                }
                let mut idx = 0usize;
                for (&c, &d) in coord.iter().zip(dims) {
                    idx = idx * d + c.rem_euclid(d as i64) as usize;
                }
                Some(idx)
            }
            Mode::Segment { lo, .. } => {
                if coord.len() != 1 {
                    return None;
                }
                let off = coord[0] - lo;
                (off >= 0 && (off as usize) < self.len).then_some(off as usize)
            }
        }
    }

    /// Integer position of a site in a one-dimensional space.
    pub fn position(&self, site: usize) -> i64 {
        debug_assert_eq!(self.dim(), 1);
        self.coord(site)[0]
    }

    /// Site at a one-dimensional position (wrapping on a ring).
    pub fn site_at(&self, pos: i64) -> Option<usize> {
        self.index(&[pos])
    }

    pub fn translate(&self, site: usize, offset: &[i64]) -> Result<Landing> {
        if offset.len() != self.dim() {
            return Err(Error::invalid(format!(
                "offset of dimension {} on a {}-dimensional space",
                offset.len(),
                self.dim()
            )));
        }
        let target: Vec<i64> = self.coord(site).iter().zip(offset).map(|(c, o)| c + o).collect();
        Ok(match self.index(&target) {
            Some(j) => Landing::Site(j),
            None => {
                let (lo, _) = self.bounds().expect("only segments have an exterior");
                Landing::Exterior(if target[0] < lo { Side::Left } else { Side::Right })
            }
        })
    }

    /// Sites of the window `[-n, n]` (one-dimensional), left to right.
    pub fn window(&self, n: usize) -> Result<Vec<usize>> {
        self.interval(-(n as i64), n as i64)
    }

    /// Sites at positions `a..=b`, left to right. On a ring the interval may
    /// wrap but must not cover any site twice.
    pub fn interval(&self, a: i64, b: i64) -> Result<Vec<usize>> {
        if self.dim() != 1 {
            return Err(Error::precondition("intervals need a one-dimensional space"));
        }
        if b < a {
            return Ok(Vec::new());
        }
        if self.is_torus() && (b - a + 1) as usize > self.len {
            return Err(Error::precondition(format!(
                "interval [{a}, {b}] wraps onto itself on a ring of {} sites",
                self.len
            )));
        }
        (a..=b)
            .map(|p| {
                self.site_at(p)
                    .ok_or_else(|| Error::precondition(format!("position {p} outside the space")))
            })
            .collect()
    }

    /// Sites whose every coordinate lies in `[-k, k]`.
    pub fn ball(&self, k: usize) -> Vec<usize> {
        let k = k as i64;
        (0..self.len)
            .filter(|&s| {
                self.coord(s).iter().enumerate().all(|(axis, &c)| {
                    let c = match &self.mode {
                        Mode::Torus { dims } => {
                            let d = dims[axis] as i64;
                            let c = c.rem_euclid(d);
                            c.min(d - c)
                        }
                        Mode::Segment { .. } => c.abs(),
                    };
                    c <= k
                })
            })
            .collect()
    }
}
