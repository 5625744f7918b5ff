use rand::Rng;
use serde::{Deserialize, Serialize};

use super::space::{Boundary, Landing, Side, SiteSpace};
use crate::error::{Error, Result};

/// Row sums and probabilities are checked to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A finite-support translation-invariant step law on `Z^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Offsets {
    dim: usize,
    steps: Vec<(Vec<i64>, f64)>,
}

impl Offsets {
    pub fn new(steps: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        let dim = steps
            .first()
            .map(|(o, _)| o.len())
            .ok_or_else(|| Error::invalid("offsets: empty step list"))?;
        let mut merged: Vec<(Vec<i64>, f64)> = Vec::new();
        let mut total = 0.0;
        for (i, (off, prob)) in steps.into_iter().enumerate() {
            if off.len() != dim || dim == 0 {
                return Err(Error::invalid(format!("offsets: entry {i} has dimension {}", off.len())));
            }
            if !(prob >= 0.0) || !prob.is_finite() {
                return Err(Error::invalid(format!("offsets: entry {i} has probability {prob}")));
            }
            if off.iter().all(|&c| c == 0) && prob > 0.0 {
                return Err(Error::invalid(format!("offsets: entry {i} is a zero step (p(x,x) must be 0)")));
            }
            total += prob;
            if prob == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(o, _)| *o == off) {
                Some(slot) => slot.1 += prob,
                None => merged.push((off, prob)),
            }
        }
        if (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::invalid(format!("offsets: probabilities sum to {total}, not 1")));
        }
        merged.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Offsets { dim, steps: merged })
    }

    /// Nearest-neighbour walk on `Z` with `p(x, x+1) = p`.
    pub fn nearest_neighbor(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("nearest-neighbour probability {p} outside [0,1]")));
        }
        Self::new(vec![(vec![1], p), (vec![-1], 1.0 - p)])
    }

    pub fn one_dim(steps: &[(i64, f64)]) -> Result<Self> {
        Self::new(steps.iter().map(|&(o, p)| (vec![o], p)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[(Vec<i64>, f64)] {
        &self.steps
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (off, p) in &self.steps {
            for (acc, &c) in m.iter_mut().zip(off) {
                *acc += p * c as f64;
            }
        }
        m
    }

    pub fn first_absolute_moment(&self) -> f64 {
        self.steps
            .iter()
            .map(|(o, p)| p * o.iter().map(|c| c.abs() as f64).sum::<f64>())
            .sum()
    }

    /// The step law of the reversed walk, `p*(x, y) = p(y, x)`.
    pub fn reversed(&self) -> Self {
        let steps = self.steps.iter().map(|(o, p)| (o.iter().map(|c| -c).collect(), *p)).collect();
        Offsets::new(steps).expect("negating a valid step law stays valid")
    }

    /// `Some(p)` when the law is supported on `{+1, -1}` in one dimension.
    pub fn nearest_neighbor_p(&self) -> Option<f64> {
        if self.dim != 1 || self.steps.iter().any(|(o, _)| o[0].abs() != 1) {
            return None;
        }
        Some(self.steps.iter().filter(|(o, _)| o[0] == 1).map(|(_, p)| p).sum())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[i64] {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (off, p) in &self.steps {
            acc += p;
            if u < acc {
                return off;
            }
        }
        &self.steps.last().expect("nonempty").0
    }
}

/// One entry of the `offsets` list in a kernel file: `[+1, 0.7]` or `[[1, 0], 0.25]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetSpec {
    Scalar(i64),
    Vector(Vec<i64>),
}

/// Kernel description as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum KernelSpec {
    Offsets { offsets: Vec<(OffsetSpec, f64)> },
    Matrix { matrix: Vec<Vec<f64>> },
}

impl KernelSpec {
    pub fn parse_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("kernel spec: {e}")))
    }
}

/// Transition matrix `p(x, y)` realised on a [`SiteSpace`].
///
/// Rows are sparse. On segments, mass that leaves the window is kept
/// separately per side so the boundary policy can decide what it means.
#[derive(Debug, Clone)]
pub struct Kernel {
    space: SiteSpace,
    rows: Vec<Vec<(usize, f64)>>,
    exits: Vec<[f64; 2]>,
    cumulative: Vec<Vec<f64>>,
    offsets: Option<Offsets>,
    stochastic: bool,
}

fn side_slot(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

impl Kernel {
    pub fn from_offsets(space: &SiteSpace, offsets: &Offsets) -> Result<Self> {
        if offsets.dim() != space.dim() {
            return Err(Error::invalid(format!(
                "offsets of dimension {} on a {}-dimensional space",
                offsets.dim(),
                space.dim()
            )));
        }
        let n = space.len();
        let mut rows = vec![Vec::new(); n];
        let mut exits = vec![[0.0; 2]; n];
        for x in 0..n {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for (off, p) in offsets.steps() {
                match space.translate(x, off)? {
                    Landing::Site(y) => {
                        if y == x {
                            return Err(Error::invalid(format!(
                                "row {x}: offset {off:?} wraps onto its own site"
                            )));
                        }
                        match row.iter_mut().find(|(t, _)| *t == y) {
                            Some(slot) => slot.1 += p,
                            None => row.push((y, *p)),
                        }
                    }
                    Landing::Exterior(side) => exits[x][side_slot(side)] += p,
                }
            }
            row.sort_by_key(|&(y, _)| y);
            rows[x] = row;
        }
        Ok(Self::assemble(space.clone(), rows, exits, Some(offsets.clone()), true))
    }

    pub fn from_matrix(space: &SiteSpace, matrix: &[Vec<f64>]) -> Result<Self> {
        let n = space.len();
        if matrix.len() != n {
            return Err(Error::invalid(format!("matrix has {} rows, space has {n} sites", matrix.len())));
        }
        let mut rows = Vec::with_capacity(n);
        for (x, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("row {x}: length {} but {n} sites", row.len())));
            }
            if let Some(y) = row.iter().position(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid(format!("row {x}: entry {y} is {}", row[y])));
            }
            if row[x] != 0.0 {
                return Err(Error::invalid(format!("row {x}: diagonal entry {} must be 0", row[x])));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {x}: sums to {sum}, not 1")));
            }
            rows.push(row.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(y, p)| (y, *p)).collect());
        }
        Ok(Self::assemble(space.clone(), rows, vec![[0.0; 2]; n], None, true))
    }

    pub fn from_spec(space: &SiteSpace, spec: &KernelSpec) -> Result<Self> {
        match spec {
            KernelSpec::Offsets { offsets } => {
                let steps = offsets
                    .iter()
                    .map(|(o, p)| {
                        let v = match o {
                            OffsetSpec::Scalar(c) => vec![*c],
                            OffsetSpec::Vector(v) => v.clone(),
                        };
                        (v, *p)
                    })
                    .collect();
                Self::from_offsets(space, &Offsets::new(steps)?)
            }
            KernelSpec::Matrix { matrix } => Self::from_matrix(space, matrix),
        }
    }

    fn assemble(
        space: SiteSpace,
        rows: Vec<Vec<(usize, f64)>>,
        exits: Vec<[f64; 2]>,
        offsets: Option<Offsets>,
        stochastic: bool,
    ) -> Self {
        let cumulative = rows
            .iter()
            .zip(&exits)
            .map(|(row, ex)| {
                let mut acc = 0.0;
                let mut c: Vec<f64> = row.iter().map(|(_, p)| {
                    acc += p;
                    acc
                })
                .collect();
                acc += ex[0];
                c.push(acc);
                acc += ex[1];
                c.push(acc);
                c
            })
            .collect();
        Kernel { space, rows, exits, cumulative, offsets, stochastic }
    }

    pub fn space(&self) -> &SiteSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn row(&self, x: usize) -> &[(usize, f64)] {
        &self.rows[x]
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.rows[x].iter().find(|(t, _)| *t == y).map_or(0.0, |(_, p)| *p)
    }

    pub fn exit(&self, x: usize, side: Side) -> f64 {
        self.exits[x][side_slot(side)]
    }

    pub fn exit_total(&self, x: usize) -> f64 {
        self.exits[x][0] + self.exits[x][1]
    }

    pub fn offsets(&self) -> Option<&Offsets> {
        self.offsets.as_ref()
    }

    /// False for the formal transpose of a kernel that is not doubly stochastic.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub fn nearest_neighbor_p(&self) -> Option<f64> {
        self.offsets.as_ref().and_then(Offsets::nearest_neighbor_p)
    }

    /// Column sums all equal one (interior columns only on segments).
    pub fn is_doubly_stochastic(&self) -> bool {
        let mut col = vec![0.0; self.len()];
        for row in &self.rows {
            for &(y, p) in row {
                col[y] += p;
            }
        }
        self.exits.iter().all(|e| e[0] == 0.0 && e[1] == 0.0)
            && col.iter().all(|c| (c - 1.0).abs() <= 1e-10)
    }

    /// Reverse kernel `p*(x, y) = p(y, x)`.
    ///
    /// Translation-invariant kernels reverse their step law. Explicit matrices
    /// are transposed; the result is flagged non-stochastic unless the
    /// original was doubly stochastic.
    pub fn reverse(&self) -> Kernel {
        if let Some(off) = &self.offsets {
            return Kernel::from_offsets(&self.space, &off.reversed())
                .expect("reversed step law is valid on the same space");
        }
        let n = self.len();
        let mut rows = vec![Vec::new(); n];
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, p) in row {
                rows[y].push((x, p));
            }
        }
        for r in &mut rows {
            r.sort_by_key(|&(y, _)| y);
        }
        let stochastic = self.is_doubly_stochastic();
        Self::assemble(self.space.clone(), rows, vec![[0.0; 2]; n], None, stochastic)
    }

    /// Probability that a walk which just left through `side` into an
    /// all-occupied exterior comes back to the adjacent edge site. Only the
    /// nearest-neighbour case has a closed form.
    pub fn exterior_return(&self, side: Side) -> Option<f64> {
        let p = self.nearest_neighbor_p()?;
        let q = 1.0 - p;
        Some(match side {
            Side::Right if p > q => q / p,
            Side::Left if q > p => p / q,
            _ => 1.0,
        })
    }

    /// Dense `N x N` matrix (exits dropped).
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, p) in row {
                m[x][y] = p;
            }
        }
        m
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Landing {
        assert!(self.stochastic, "cannot sample from a non-stochastic kernel");
        let cum = &self.cumulative[x];
        let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
        let row = &self.rows[x];
        for (k, &c) in cum.iter().enumerate() {
            if u < c {
                return match k.cmp(&row.len()) {
                    std::cmp::Ordering::Less => Landing::Site(row[k].0),
                    std::cmp::Ordering::Equal => Landing::Exterior(Side::Left),
                    std::cmp::Ordering::Greater => Landing::Exterior(Side::Right),
                };
            }
        }
        // u landed on the (rounded) upper end; take the last positive entry
        if self.exits[x][1] > 0.0 {
            Landing::Exterior(Side::Right)
        } else if self.exits[x][0] > 0.0 {
            Landing::Exterior(Side::Left)
        } else {
            Landing::Site(row[row.len() - 1].0)
        }
    }

    pub(crate) fn boundary(&self) -> Option<Boundary> {
        self.space.boundary()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sum_to_one_on_torus() {
        let space = SiteSpace::ring(5).unwrap();
        let k = Kernel::from_offsets(&space, &Offsets::one_dim(&[(2, 1.0 / 3.0), (-1, 2.0 / 3.0)]).unwrap()).unwrap();
        for x in 0..5 {
            let s: f64 = k.row(x).iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert!(k.is_doubly_stochastic());
        let mean = k.offsets().unwrap().mean()[0];
        assert!(mean.abs() < 1e-15);
    }

    #[test]
    fn small_ring_merges_offsets() {
        let space = SiteSpace::ring(2).unwrap();
        let k = Kernel::from_offsets(&space, &Offsets::nearest_neighbor(0.5).unwrap()).unwrap();
        assert_eq!(k.row(0), &[(1, 1.0)]);
        assert!(Kernel::from_offsets(&space, &Offsets::one_dim(&[(2, 1.0)]).unwrap()).is_err());
    }

    #[test]
    fn segment_records_exit_mass() {
        let space = SiteSpace::segment(0, 3, Boundary::OpenEscape).unwrap();
        let k = Kernel::from_offsets(&space, &Offsets::nearest_neighbor(0.7).unwrap()).unwrap();
        assert!((k.exit(3, Side::Right) - 0.7).abs() < 1e-15);
        assert!((k.exit(0, Side::Left) - 0.3).abs() < 1e-15);
        assert_eq!(k.exit_total(1), 0.0);
    }

    #[test]
    fn matrix_validation_names_row() {
        let space = SiteSpace::ring(3).unwrap();
        let bad = vec![vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.4], vec![1.0, 0.0, 0.0]];
        let err = Kernel::from_matrix(&space, &bad).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        let diag = vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.0, 0.5], vec![1.0, 0.0, 0.0]];
        assert!(Kernel::from_matrix(&space, &diag).unwrap_err().to_string().contains("row 0"));
    }

    #[test]
    fn spec_parsing() {
        let space = SiteSpace::ring(4).unwrap();
        let spec = KernelSpec::parse_json(r#"{"offsets": [[1, 0.7], [-1, 0.3]]}"#).unwrap();
        let k = Kernel::from_spec(&space, &spec).unwrap();
        assert!((k.p(0, 1) - 0.7).abs() < 1e-15);
        let spec2 = KernelSpec::parse_json(r#"{"offsets": [[[1, 0], 0.5], [[0, 1], 0.5]]}"#).unwrap();
        let grid = SiteSpace::torus(&[3, 3]).unwrap();
        assert!(Kernel::from_spec(&grid, &spec2).is_ok());
        let m = KernelSpec::parse_json(r#"{"matrix": [[0,1,0,0],[0,0,1,0],[0,0,0,1],[1,0,0,0]]}"#).unwrap();
        assert!(Kernel::from_spec(&space, &m).is_ok());
        let bad = KernelSpec::parse_json(r#"{"offsets": [[1, 0.7], [-1, 0.2]]}"#).unwrap();
        assert!(Kernel::from_spec(&space, &bad).is_err());
    }

    #[test]
    fn reverse_kernel() {
        let space = SiteSpace::ring(4).unwrap();
        let k = Kernel::from_offsets(&space, &Offsets::nearest_neighbor(0.7).unwrap()).unwrap();
        let r = k.reverse();
        assert!((r.p(1, 0) - 0.7).abs() < 1e-15);
        let m = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.5, 0.5, 0.0],
        ];
        let k = Kernel::from_matrix(&SiteSpace::ring(3).unwrap(), &m).unwrap();
        let r = k.reverse();
        assert!(!r.is_stochastic());
        assert_eq!(r.p(1, 0), 1.0);
    }

    #[test]
    fn exterior_return_closed_form() {
        let space = SiteSpace::segment(0, 3, Boundary::OccupiedExterior).unwrap();
        let k = Kernel::from_offsets(&space, &Offsets::nearest_neighbor(0.7).unwrap()).unwrap();
        assert!((k.exterior_return(Side::Right).unwrap() - 0.3 / 0.7).abs() < 1e-15);
        assert_eq!(k.exterior_return(Side::Left).unwrap(), 1.0);
    }
}
