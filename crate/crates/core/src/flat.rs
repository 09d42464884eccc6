//! Flat norms of atomic measures against test functions that vanish on the
//! boundary and have Lipschitz constant at most 1.
//!
//! The discrete problem maximizes `sum w_i phi(x_i)` over values of `phi` on
//! a grid of spacing `h` plus the atom positions, subject to
//! `|phi(p) - phi(q)| <= |p - q|` on stencil pairs and
//! `|phi(p)| <= dist(p, boundary)` at every point. Its linear-programming
//! dual is a transport problem: positive mass travels to negative mass or to
//! the boundary at shortest-path cost in the constraint graph. We compute
//! shortest paths with Dijkstra from each atom and solve the transport by
//! successive shortest paths, which yields the LP optimum exactly.
//!
//! Vector measures use the sum of the two componentwise norms, which lies
//! between the Euclidean-constraint flat norm and twice it.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::{DislocationMeasure, Domain};

/// Stencil half-width: edges join grid nodes `h (a, b)` apart for coprime
/// `|a|, |b| <= STENCIL`. Graph distances overestimate Euclidean ones by at
/// most a factor `1 / cos(theta / 2)` where `theta` is the widest angular gap
/// between stencil directions, about 0.75% for width 4.
pub const DEFAULT_STENCIL: i64 = 4;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FlatOptions {
    pub h: f64,
    pub stencil: i64,
    /// Limit on the number of grid nodes.
    pub max_nodes: usize,
}

impl FlatOptions {
    pub fn new(h: f64) -> Self {
        FlatOptions { h, stencil: DEFAULT_STENCIL, max_nodes: 4_000_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatValue {
    pub value: f64,
    pub h: f64,
    pub grid_nodes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatNormProblem {
    pub mu: DislocationMeasure,
    pub domain: Domain,
    pub h: f64,
}

impl FlatNormProblem {
    pub fn solve(&self) -> Result<FlatValue> {
        vector_flat_surrogate(&self.mu, &self.domain, self.h)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn stencil_offsets(w: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for a in -w..=w {
        for b in -w..=w {
            if (a, b) != (0, 0) && gcd(a, b) == 1 {
                out.push((a, b));
            }
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Constraint graph: interior grid nodes, then atoms, then one boundary node.
struct Graph {
    nx: usize,
    ny: usize,
    /// Grid index of each interior node, `usize::MAX` outside.
    id: Vec<usize>,
    pos: Vec<(usize, usize)>,
    bdist: Vec<f64>,
    offsets: Vec<(i64, i64, f64)>,
    atoms: Vec<Vec2>,
    atom_bdist: Vec<f64>,
    /// Edges touching atoms, keyed by node index.
    extra: HashMap<usize, Vec<(usize, f64)>>,
}

impl Graph {
    fn build(domain: &Domain, atoms: &[Vec2], opts: &FlatOptions) -> Result<Self> {
        let h = opts.h;
        let (lo, hi) = domain.bbox();
        let nx = ((hi.x - lo.x) / h).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / h).floor() as usize + 1;
        if nx.saturating_mul(ny) > opts.max_nodes {
            return Err(Error::Resource(format!("flat-norm grid of {nx} x {ny} nodes exceeds the limit")));
        }
        let mut id = vec![usize::MAX; nx * ny];
        let mut pos = Vec::new();
        let mut bdist = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let p = lo + Vec2::new(ix as f64, iy as f64) * h;
                if domain.contains_strict(p) {
                    let d = domain.dist_to_boundary(p);
                    if d > 0.0 {
                        id[iy * nx + ix] = pos.len();
                        pos.push((ix, iy));
                        bdist.push(d);
                    }
                }
            }
        }
        let offsets = stencil_offsets(opts.stencil)
            .into_iter()
            .map(|(a, b)| (a, b, h * ((a * a + b * b) as f64).sqrt()))
            .collect();
        let n_grid = pos.len();
        let mut extra: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        let reach = opts.stencil as f64 * h;
        let mut link = |a: usize, b: usize, w: f64| {
            extra.entry(a).or_default().push((b, w));
            extra.entry(b).or_default().push((a, w));
        };
        for (k, &x) in atoms.iter().enumerate() {
            let ai = n_grid + k;
            let cx = ((x.x - lo.x) / h).round() as i64;
            let cy = ((x.y - lo.y) / h).round() as i64;
            let w = opts.stencil;
            for iy in cy - w..=cy + w {
                for ix in cx - w..=cx + w {
                    if ix < 0 || iy < 0 || ix as usize >= nx || iy as usize >= ny {
                        continue;
                    }
                    let g = id[iy as usize * nx + ix as usize];
                    if g == usize::MAX {
                        continue;
                    }
                    let p = lo + Vec2::new(ix as f64, iy as f64) * h;
                    let d = (p - x).norm();
                    if d <= reach {
                        link(ai, g, d);
                    }
                }
            }
            for (k2, &y) in atoms.iter().enumerate().take(k) {
                let d = (x - y).norm();
                if d <= reach {
                    link(ai, n_grid + k2, d);
                }
            }
        }
        let atom_bdist = atoms.iter().map(|&x| domain.dist_to_boundary(x)).collect();
        Ok(Graph { nx, ny, id, pos, bdist, offsets, atoms: atoms.to_vec(), atom_bdist, extra })
    }

    fn n_grid(&self) -> usize {
        self.pos.len()
    }

    fn boundary(&self) -> usize {
        self.pos.len() + self.atoms.len()
    }

    /// Shortest distances from atom `src` to every atom and to the boundary.
    fn distances_from(&self, src: usize) -> (Vec<f64>, f64) {
        let n = self.boundary() + 1;
        let bnode = self.boundary();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let start = self.n_grid() + src;
        dist[start] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Item(0.0, start));
        let mut remaining = self.atoms.len() + 1;
        while let Some(Item(d, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u >= self.n_grid() {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            let mut relax = |v: usize, w: f64, heap: &mut BinaryHeap<Item>| {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Item(nd, v));
                }
            };
            if u == bnode {
                for v in 0..self.n_grid() {
                    relax(v, self.bdist[v], &mut heap);
                }
                for k in 0..self.atoms.len() {
                    relax(self.n_grid() + k, self.atom_bdist[k], &mut heap);
                }
                continue;
            }
            if u < self.n_grid() {
                let (ix, iy) = self.pos[u];
                for &(a, b, w) in &self.offsets {
                    let (jx, jy) = (ix as i64 + a, iy as i64 + b);
                    if jx < 0 || jy < 0 || jx as usize >= self.nx || jy as usize >= self.ny {
                        continue;
                    }
                    let v = self.id[jy as usize * self.nx + jx as usize];
                    if v != usize::MAX {
                        relax(v, w, &mut heap);
                    }
                }
                relax(bnode, self.bdist[u], &mut heap);
            } else {
                relax(bnode, self.atom_bdist[u - self.n_grid()], &mut heap);
            }
            if let Some(list) = self.extra.get(&u) {
                for &(v, w) in list {
                    relax(v, w, &mut heap);
                }
            }
        }
        let atom_d = (0..self.atoms.len()).map(|k| dist[self.n_grid() + k]).collect();
        (atom_d, dist[bnode])
    }
}

/// Minimum-cost flow by successive shortest paths with Bellman-Ford on the
/// residual graph; capacities are real.
struct Flow {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    cost: Vec<f64>,
}

impl Flow {
    fn new(n: usize) -> Self {
        Flow { head: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new(), cost: Vec::new() }
    }

    fn edge(&mut self, a: usize, b: usize, cap: f64, cost: f64) {
        self.head[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(cap);
        self.cost.push(cost);
        self.head[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0.0);
        self.cost.push(-cost);
    }

    fn run(&mut self, s: usize, t: usize, tol: f64) -> Result<(f64, f64)> {
        let n = self.head.len();
        let (mut flow, mut total) = (0.0, 0.0);
        for _ in 0..(10 * self.to.len() + 10) {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev = vec![usize::MAX; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if dist[u] == f64::INFINITY {
                        continue;
                    }
                    for &e in &self.head[u] {
                        if self.cap[e] > tol {
                            let v = self.to[e];
                            let nd = dist[u] + self.cost[e];
                            if nd < dist[v] - 1e-15 * (1.0 + nd.abs()) {
                                dist[v] = nd;
                                prev[v] = e;
                                changed = true;
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t] == f64::INFINITY {
                return Ok((flow, total));
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            while v != s {
                let e = prev[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            flow += push;
            total += push * dist[t];
        }
        Err(Error::Internal("transport solver did not terminate".into()))
    }
}

/// Sums weights of coincident atoms and drops zeros.
fn merge_atoms(atoms: &[(Vec2, f64)]) -> Vec<(Vec2, f64)> {
    let mut out: Vec<(Vec2, f64)> = Vec::new();
    for &(x, w) in atoms {
        if let Some(slot) = out.iter_mut().find(|(y, _)| *y == x) {
            slot.1 += w;
        } else {
            out.push((x, w));
        }
    }
    let scale = atoms.iter().map(|a| a.1.abs()).fold(0.0, f64::max);
    out.retain(|a| a.1.abs() > 1e-15 * scale);
    out
}

pub fn scalar_flat_norm(atoms: &[(Vec2, f64)], domain: &Domain, h: f64) -> Result<FlatValue> {
    scalar_flat_norm_with(atoms, domain, &FlatOptions::new(h))
}

pub fn scalar_flat_norm_with(atoms: &[(Vec2, f64)], domain: &Domain, opts: &FlatOptions) -> Result<FlatValue> {
    if !(opts.h > 0.0) || !opts.h.is_finite() {
        return Err(Error::pre("grid spacing must be positive"));
    }
    if opts.stencil < 1 {
        return Err(Error::pre("stencil width must be at least 1"));
    }
    for (x, w) in atoms {
        if !w.is_finite() {
            return Err(Error::pre("atom weights must be finite"));
        }
        if !domain.contains(*x) {
            return Err(Error::pre(format!("atom ({}, {}) lies outside the domain", x.x, x.y)));
        }
    }
    let atoms = merge_atoms(atoms);
    if atoms.is_empty() {
        return Ok(FlatValue { value: 0.0, h: opts.h, grid_nodes: 0 });
    }
    let mut min_d = f64::INFINITY;
    for i in 0..atoms.len() {
        for j in 0..i {
            min_d = min_d.min((atoms[i].0 - atoms[j].0).norm());
        }
    }
    if opts.h > min_d / 4.0 {
        return Err(Error::pre(format!(
            "grid spacing {} does not resolve the atom separation {min_d}",
            opts.h
        )));
    }
    let positions: Vec<Vec2> = atoms.iter().map(|a| a.0).collect();
    let graph = Graph::build(domain, &positions, opts)?;
    let rows: Vec<(Vec<f64>, f64)> = (0..atoms.len()).into_par_iter().map(|k| graph.distances_from(k)).collect();
    let pos: Vec<usize> = (0..atoms.len()).filter(|&k| atoms[k].1 > 0.0).collect();
    let neg: Vec<usize> = (0..atoms.len()).filter(|&k| atoms[k].1 < 0.0).collect();
    // nodes: source, sink, boundary-in, boundary-out, positives, negatives
    let (s, t, bin, bout) = (0, 1, 2, 3);
    let base = 4;
    let mut flow = Flow::new(base + pos.len() + neg.len());
    let wp: f64 = pos.iter().map(|&k| atoms[k].1).sum();
    let wn: f64 = neg.iter().map(|&k| -atoms[k].1).sum();
    let big = 2.0 * (wp + wn);
    flow.edge(s, bin, wn, 0.0);
    flow.edge(bout, t, wp, 0.0);
    flow.edge(bin, bout, big, 0.0);
    for (a, &i) in pos.iter().enumerate() {
        flow.edge(s, base + a, atoms[i].1, 0.0);
        flow.edge(base + a, bout, big, rows[i].1);
        for (b, &j) in neg.iter().enumerate() {
            flow.edge(base + a, base + pos.len() + b, big, rows[i].0[j]);
        }
    }
    for (b, &j) in neg.iter().enumerate() {
        flow.edge(bin, base + pos.len() + b, big, rows[j].1);
        flow.edge(base + pos.len() + b, t, -atoms[j].1, 0.0);
    }
    let tol = 1e-13 * (wp + wn);
    let (sent, value) = flow.run(s, t, tol)?;
    if (sent - (wp + wn)).abs() > 1e-9 * (wp + wn) {
        return Err(Error::Internal(format!("transport moved {sent} of {} units", wp + wn)));
    }
    Ok(FlatValue { value, h: opts.h, grid_nodes: graph.n_grid() })
}

/// Sum of the two componentwise scalar flat norms.
pub fn vector_flat_surrogate(mu: &DislocationMeasure, domain: &Domain, h: f64) -> Result<FlatValue> {
    vector_flat_surrogate_with(mu, domain, &FlatOptions::new(h))
}

pub fn vector_flat_surrogate_with(mu: &DislocationMeasure, domain: &Domain, opts: &FlatOptions) -> Result<FlatValue> {
    let mut value = 0.0;
    let mut nodes = 0;
    for k in 0..2 {
        let comp: Vec<(Vec2, f64)> = mu.atoms.iter().map(|a| (a.x, a.xi[k])).collect();
        let v = scalar_flat_norm_with(&comp, domain, opts)?;
        value += v.value;
        nodes = nodes.max(v.grid_nodes);
    }
    Ok(FlatValue { value, h: opts.h, grid_nodes: nodes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatMonitorRow {
    pub k: usize,
    pub eps: f64,
    pub h: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatMonitorReport {
    pub rows: Vec<FlatMonitorRow>,
    /// True when the values do not increase along the sequence.
    pub monotone_decreasing: bool,
}

/// Surrogate flat distance of `mu_k / |log eps_k|` to `target` for each
/// entry; `hs` holds one spacing per entry or a single shared one.
pub fn flat_convergence_monitor(
    seq: &[(DislocationMeasure, f64)],
    target: &DislocationMeasure,
    domain: &Domain,
    hs: &[f64],
) -> Result<FlatMonitorReport> {
    if hs.is_empty() || (hs.len() != 1 && hs.len() != seq.len()) {
        return Err(Error::pre("need one grid spacing or one per sequence entry"));
    }
    let rows: Vec<FlatMonitorRow> = seq
        .par_iter()
        .enumerate()
        .map(|(k, (mu, eps))| {
            if !(*eps > 0.0 && *eps < 1.0) {
                return Err(Error::pre("eps must lie in (0, 1)"));
            }
            let h = if hs.len() == 1 { hs[0] } else { hs[k] };
            let diff = mu.scaled(1.0 / eps.ln().abs()).union(&target.scaled(-1.0));
            let v = vector_flat_surrogate(&diff, domain, h)?;
            Ok(FlatMonitorRow { k, eps: *eps, h, value: v.value })
        })
        .collect::<Result<_>>()?;
    let monotone_decreasing = rows.windows(2).all(|w| w[1].value <= w[0].value + 1e-12);
    Ok(FlatMonitorReport { rows, monotone_decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom_is_boundary_distance() {
        let dom = Domain::unit_square();
        let v = scalar_flat_norm(&[(Vec2::new(0.3, 0.6), -2.0)], &dom, 0.05).unwrap();
        assert!((v.value - 0.6).abs() < 1e-12);
    }

    #[test]
    fn dipole_uses_separation() {
        let dom = Domain::unit_square();
        let atoms = [(Vec2::new(0.4, 0.5), 1.0), (Vec2::new(0.6, 0.5), -1.0)];
        let v = scalar_flat_norm(&atoms, &dom, 0.02).unwrap();
        assert!((v.value - 0.2).abs() < 0.04, "{}", v.value);
    }
}
