//! First-passage distributions of the jump chain by absorbing linear solves.
//!
//! A walk starts at `start` and takes at least one step. Sites flagged
//! absorbing stop it; every other site is transient. The mass that is never
//! absorbed splits into `escape` (left the space through an open boundary, or
//! drifted away in an occupied exterior) and `trapped` (stays forever inside
//! a closed set of transient sites).
//!
//! The solve is on the expected-visit vector `w` of the transient block:
//! `w (I - T) = r`, where `r` is the first-step distribution from `start`.
//! Transient sites that cannot reach a sink are split off first so that the
//! remaining block is nonsingular.

use nalgebra::{DMatrix, DVector};

use super::kernel::Kernel;
use super::space::{Boundary, Side};
use crate::error::{Error, Result};

/// Transient blocks up to this size use dense LU.
pub const DENSE_LIMIT: usize = 2000;
const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Absorption {
    /// Absorbed mass per site (zero on transient sites).
    pub hits: Vec<f64>,
    pub escape: f64,
    pub trapped: f64,
}

impl Absorption {
    pub fn at(&self, site: usize) -> f64 {
        self.hits[site]
    }

    /// Mass that is never absorbed.
    pub fn lost(&self) -> f64 {
        self.escape + self.trapped
    }

    pub fn total(&self) -> f64 {
        self.hits.iter().sum::<f64>() + self.lost()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Site(usize),
    Exterior(Side),
}

#[derive(Debug, Clone, Copy)]
enum Dest {
    Node(usize),
    Absorb(usize),
    Escape,
}

struct Graph {
    out: Vec<Vec<(Dest, f64)>>,
    first: Vec<(Dest, f64)>,
}

struct Builder<'a, F: Fn(usize) -> bool> {
    kernel: &'a Kernel,
    absorbing: F,
    site_node: Vec<Option<usize>>,
    ext_node: [Option<usize>; 2],
    nodes: Vec<Node>,
}

impl<F: Fn(usize) -> bool> Builder<'_, F> {
    fn node_for_site(&mut self, y: usize) -> Dest {
        if (self.absorbing)(y) {
            return Dest::Absorb(y);
        }
        Dest::Node(*self.site_node[y].get_or_insert_with(|| {
            self.nodes.push(Node::Site(y));
            self.nodes.len() - 1
        }))
    }

    fn exit(&mut self, side: Side) -> Result<Dest> {
        match self.kernel.boundary() {
            None => unreachable!("tori have no exits"),
            Some(Boundary::OpenEscape) => Ok(Dest::Escape),
            Some(Boundary::OccupiedExterior) => {
                if self.kernel.exterior_return(side).is_none() {
                    return Err(Error::not_computable(
                        "walk can enter the occupied exterior and the kernel has no closed-form return probability",
                    ));
                }
                let slot = match side {
                    Side::Left => 0,
                    Side::Right => 1,
                };
                Ok(Dest::Node(*self.ext_node[slot].get_or_insert_with(|| {
                    self.nodes.push(Node::Exterior(side));
                    self.nodes.len() - 1
                })))
            }
        }
    }

    fn transitions_from_site(&mut self, x: usize) -> Result<Vec<(Dest, f64)>> {
        let mut out = Vec::with_capacity(self.kernel.row(x).len() + 2);
        for &(y, p) in self.kernel.row(x) {
            out.push((self.node_for_site(y), p));
        }
        for side in [Side::Left, Side::Right] {
            let m = self.kernel.exit(x, side);
            if m > 0.0 {
                out.push((self.exit(side)?, m));
            }
        }
        Ok(out)
    }

    fn transitions(&mut self, node: Node) -> Result<Vec<(Dest, f64)>> {
        match node {
            Node::Site(x) => self.transitions_from_site(x),
            Node::Exterior(side) => {
                let r = self.kernel.exterior_return(side).expect("checked on creation");
                let (lo, hi) = (0, self.kernel.len() - 1);
                let edge = if side == Side::Left { lo } else { hi };
                let mut out = Vec::with_capacity(2);
                if r > 0.0 {
                    out.push((self.node_for_site(edge), r));
                }
                if r < 1.0 {
                    out.push((Dest::Escape, 1.0 - r));
                }
                Ok(out)
            }
        }
    }
}

fn build<F: Fn(usize) -> bool>(kernel: &Kernel, start: usize, absorbing: F) -> Result<Graph> {
    let mut b = Builder {
        kernel,
        absorbing,
        site_node: vec![None; kernel.len()],
        ext_node: [None, None],
        nodes: Vec::new(),
    };
    let first = b.transitions_from_site(start)?;
    let mut out = Vec::new();
    let mut k = 0;
    while k < b.nodes.len() {
        let node = b.nodes[k];
        out.push(b.transitions(node)?);
        k += 1;
    }
    Ok(Graph { out, first })
}

/// Transient nodes from which some sink is reachable.
fn leaky_nodes(g: &Graph) -> Vec<bool> {
    let m = g.out.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut leaky = vec![false; m];
    let mut stack = Vec::new();
    for (i, row) in g.out.iter().enumerate() {
        for &(d, p) in row {
            if p <= 0.0 {
                continue;
            }
            match d {
                Dest::Node(j) => rev[j].push(i),
                Dest::Absorb(_) | Dest::Escape => {
                    if !leaky[i] {
                        leaky[i] = true;
                        stack.push(i);
                    }
                }
            }
        }
    }
    while let Some(j) = stack.pop() {
        for &i in &rev[j] {
            if !leaky[i] {
                leaky[i] = true;
                stack.push(i);
            }
        }
    }
    leaky
}

/// Solve `w (I - T) = r` on the leaky block; `idx` maps nodes to block rows.
fn expected_visits(g: &Graph, idx: &[Option<usize>], m: usize, dense_limit: usize) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; m];
    for &(d, p) in &g.first {
        if let Dest::Node(j) = d {
            if let Some(a) = idx[j] {
                rhs[a] += p;
            }
        }
    }
    if m == 0 {
        return Ok(rhs);
    }
    // rows of the transposed system: (I - T)^T w = r
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (i, row) in g.out.iter().enumerate() {
        let Some(a) = idx[i] else { continue };
        for &(d, p) in row {
            if let Dest::Node(j) = d {
                if let Some(b) = idx[j] {
                    cols[b].push((a, p));
                }
            }
        }
    }
    let w = if m <= dense_limit {
        let mut mat = DMatrix::<f64>::identity(m, m);
        for (b, col) in cols.iter().enumerate() {
            for &(a, p) in col {
                mat[(b, a)] -= p;
            }
        }
        let rhs_v = DVector::from_vec(rhs.clone());
        let sol = mat
            .clone()
            .lu()
            .solve(&rhs_v)
            .ok_or_else(|| Error::Numerical { what: "singular transient block".into(), residual: f64::INFINITY })?;
        let res = (&mat * &sol - &rhs_v).amax();
        let scale = sol.amax().max(1.0);
        if !(res <= RESIDUAL_TOL * scale * m as f64) {
            return Err(Error::Numerical { what: "absorbing solve".into(), residual: res });
        }
        sol.iter().copied().collect()
    } else {
        bicgstab(&cols, &rhs)?
    };
    Ok(w)
}

fn apply(cols: &[Vec<(usize, f64)>], x: &[f64], out: &mut [f64]) {
    for (b, col) in cols.iter().enumerate() {
        out[b] = x[b] - col.iter().map(|&(a, p)| p * x[a]).sum::<f64>();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// BiCGSTAB on `(I - T)^T w = r`, restarted on breakdown.
fn bicgstab(cols: &[Vec<(usize, f64)>], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = rhs.len();
    let mut x = vec![0.0; m];
    let mut r = rhs.to_vec();
    let mut ax = vec![0.0; m];
    let max_iter = 50 * m + 1000;
    let mut iter = 0;
    let target = |x: &[f64]| RESIDUAL_TOL * norm_inf(x).max(1.0);
    'restart: while iter < max_iter {
        let r_hat = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        let mut v = vec![0.0; m];
        let mut p = vec![0.0; m];
        let mut s = vec![0.0; m];
        let mut t = vec![0.0; m];
        while iter < max_iter {
            iter += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 {
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..m {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            apply(cols, &p, &mut v);
            let denom = dot(&r_hat, &v);
            if denom.abs() < 1e-300 {
                continue 'restart;
            }
            alpha = rho_new / denom;
            for i in 0..m {
                s[i] = r[i] - alpha * v[i];
            }
            if norm_inf(&s) <= target(&x) {
                for i in 0..m {
                    x[i] += alpha * p[i];
                }
                break 'restart;
            }
            apply(cols, &s, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                continue 'restart;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..m {
                x[i] += alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            rho = rho_new;
            if norm_inf(&r) <= target(&x) {
                break 'restart;
            }
            if omega == 0.0 {
                continue 'restart;
            }
        }
    }
    apply(cols, &x, &mut ax);
    let residual = ax.iter().zip(rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if residual <= 10.0 * target(&x) {
        Ok(x)
    } else {
        Err(Error::Numerical { what: "iterative absorbing solve did not converge".into(), residual })
    }
}

/// First-passage distribution of the walk from `start` (at least one step)
/// into the sites where `absorbing` holds.
pub fn absorb(kernel: &Kernel, start: usize, absorbing: impl Fn(usize) -> bool) -> Result<Absorption> {
    absorb_with(kernel, start, absorbing, DENSE_LIMIT)
}

fn absorb_with(
    kernel: &Kernel,
    start: usize,
    absorbing: impl Fn(usize) -> bool,
    dense_limit: usize,
) -> Result<Absorption> {
    if start >= kernel.len() {
        return Err(Error::invalid(format!("start site {start} outside the space")));
    }
    if !kernel.is_stochastic() {
        return Err(Error::precondition("kernel rows are not stochastic"));
    }
    let g = build(kernel, start, absorbing)?;
    let leaky = leaky_nodes(&g);
    let mut idx = vec![None; g.out.len()];
    let mut m = 0;
    for (i, &l) in leaky.iter().enumerate() {
        if l {
            idx[i] = Some(m);
            m += 1;
        }
    }
    let w = expected_visits(&g, &idx, m, dense_limit)?;

    let mut out = Absorption { hits: vec![0.0; kernel.len()], escape: 0.0, trapped: 0.0 };
    let credit = |d: Dest, mass: f64, out: &mut Absorption| match d {
        Dest::Absorb(a) => out.hits[a] += mass,
        Dest::Escape => out.escape += mass,
        Dest::Node(j) => {
            if idx[j].is_none() {
                out.trapped += mass;
            }
        }
    };
    for &(d, p) in &g.first {
        credit(d, p, &mut out);
    }
    for (i, row) in g.out.iter().enumerate() {
        let Some(a) = idx[i] else { continue };
        let wa = w[a];
        if wa == 0.0 {
            continue;
        }
        for &(d, p) in row {
            credit(d, wa * p, &mut out);
        }
    }
    Ok(out)
}

/// Hitting probabilities for a set of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Hitting {
    pub targets: Vec<(usize, f64)>,
    pub forbidden: f64,
    /// Mass absorbed nowhere (escape plus trapped).
    pub deficit: f64,
}

/// Exact probability that the walk from `start` hits each target before any
/// other target or forbidden site.
pub fn hitting_probability(kernel: &Kernel, start: usize, targets: &[usize], forbidden: &[usize]) -> Result<Hitting> {
    let n = kernel.len();
    let mut class = vec![0u8; n];
    for &t in targets {
        if t >= n {
            return Err(Error::invalid(format!("target {t} outside the space")));
        }
        class[t] = 1;
    }
    for &f in forbidden {
        if f >= n {
            return Err(Error::invalid(format!("forbidden site {f} outside the space")));
        }
        if class[f] == 1 {
            return Err(Error::invalid(format!("site {f} is both target and forbidden")));
        }
        class[f] = 2;
    }
    let a = absorb(kernel, start, |s| class[s] != 0)?;
    let mut seen = vec![false; n];
    let per_target = targets
        .iter()
        .filter(|&&t| !std::mem::replace(&mut seen[t], true))
        .map(|&t| (t, a.at(t)))
        .collect();
    let forbidden_mass = (0..n).filter(|&s| class[s] == 2).map(|s| a.at(s)).sum();
    Ok(Hitting { targets: per_target, forbidden: forbidden_mass, deficit: a.lost() })
}
