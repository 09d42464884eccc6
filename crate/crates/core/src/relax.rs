//! The relaxed self-energy density
//! `phi(xi) = min { sum lambda_k psi(xi_k) : sum lambda_k xi_k = xi, lambda_k >= 0, xi_k in S }`
//! and relaxed integrals `int phi(d mu / d|mu|) d|mu|`.
//!
//! `phi` is the gauge of the convex hull of the points `xi / psi(xi)` over
//! nonzero lattice vectors: writing `xi = s p_a + t p_b` with hull vertices
//! `p_a, p_b` gives the decomposition `lambda_a = s / psi(xi_a)` of cost
//! `s + t`. Long generators have `|xi / psi(xi)| <= 1 / (psi_min |xi|)` and
//! fall strictly inside the hull of the basis points, which yields an exact
//! enumeration cutoff.

use serde::{Deserialize, Serialize};

use crate::annulus::PsiLimit;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::{BurgersLattice, DislocationMeasure};

/// Directions used to bound `psi` on the unit circle.
const SWEEP: usize = 720;

/// A 2-homogeneous self-energy `psi`.
pub trait PsiOracle: Sync {
    fn psi(&self, xi: Vec2) -> f64;
}

impl<F: Fn(Vec2) -> f64 + Sync> PsiOracle for F {
    fn psi(&self, xi: Vec2) -> f64 {
        self(xi)
    }
}

impl PsiOracle for PsiLimit {
    fn psi(&self, xi: Vec2) -> f64 {
        self.value(xi)
    }
}

/// `psi(xi) = xi^T Q xi`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadraticPsi(pub [[f64; 2]; 2]);

impl PsiOracle for QuadraticPsi {
    fn psi(&self, xi: Vec2) -> f64 {
        let q = &self.0;
        xi.x * (q[0][0] * xi.x + q[0][1] * xi.y) + xi.y * (q[1][0] * xi.x + q[1][1] * xi.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub lambda: f64,
    pub xi: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiSolution {
    pub value: f64,
    pub decomposition: Vec<Generator>,
    pub generator_radius: f64,
}

/// Hull data for repeated `phi` queries with one lattice and one `psi`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Relaxation {
    /// Hull vertices in counter-clockwise order: lattice vector and its
    /// `psi` value.
    pub vertices: Vec<(Vec2, f64)>,
    pub generator_radius: f64,
    pub auto_radius: f64,
    pub generators: usize,
}

/// Smallest `psi` on the unit circle up to the sweep resolution, corrected
/// downwards by the largest neighbour variation.
fn psi_unit_min(psi: &dyn PsiOracle) -> f64 {
    let vals: Vec<f64> = (0..SWEEP)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / SWEEP as f64;
            psi.psi(Vec2::new(t.cos(), t.sin()))
        })
        .collect();
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let var = (0..SWEEP).map(|k| (vals[k] - vals[(k + 1) % SWEEP]).abs()).fold(0.0, f64::max);
    min - var
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Enumeration radius beyond which no lattice vector can be a hull vertex.
pub fn auto_generator_radius(lattice: &BurgersLattice, psi: &dyn PsiOracle) -> Result<f64> {
    let pmin = psi_unit_min(psi);
    if !(pmin > 0.0) {
        return Err(Error::pre("psi must be positive on the unit circle"));
    }
    let p1 = lattice.b1() / psi.psi(lattice.b1());
    let p2 = lattice.b2() / psi.psi(lattice.b2());
    let area = cross(p1, p2).abs();
    let inradius = area / (p1 - p2).norm().max((p1 + p2).norm());
    Ok((1.0 / (pmin * inradius)).max(lattice.max_basis_length()) * (1.0 + 1e-9))
}

impl Relaxation {
    /// Builds the hull from all lattice vectors within `radius`, or within
    /// the automatic bound when `radius` is `None`.
    pub fn new(lattice: &BurgersLattice, psi: &dyn PsiOracle, radius: Option<f64>) -> Result<Self> {
        let auto = auto_generator_radius(lattice, psi)?;
        let radius = match radius {
            Some(r) if r < auto => {
                return Err(Error::pre(format!(
                    "generator radius {r} is below the automatic bound {auto}"
                )))
            }
            Some(r) => r,
            None => auto,
        };
        let gens: Vec<Vec2> =
            lattice.enumerate(radius)?.into_iter().filter(|v| v.norm() > 0.0).collect();
        let mut pts: Vec<(Vec2, Vec2, f64)> = Vec::with_capacity(gens.len());
        for g in &gens {
            let p = psi.psi(*g);
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::num(format!("psi({}, {}) = {p} is not positive", g.x, g.y)));
            }
            pts.push((*g / p, *g, p));
        }
        let hull = convex_hull(pts);
        if hull.len() < 3 {
            return Err(Error::Internal("generator hull is degenerate".into()));
        }
        Ok(Relaxation {
            vertices: hull.into_iter().map(|(_, g, p)| (g, p)).collect(),
            generator_radius: radius,
            auto_radius: auto,
            generators: gens.len(),
        })
    }

    fn point(&self, k: usize) -> Vec2 {
        let (g, p) = self.vertices[k % self.vertices.len()];
        g / p
    }

    pub fn solve(&self, xi: Vec2) -> Result<PhiSolution> {
        if xi == Vec2::zeros() {
            return Ok(PhiSolution {
                value: 0.0,
                decomposition: Vec::new(),
                generator_radius: self.generator_radius,
            });
        }
        let n = self.vertices.len();
        for k in 0..n {
            let (pa, pb) = (self.point(k), self.point(k + 1));
            if cross(pa, xi) >= 0.0 && cross(xi, pb) >= 0.0 {
                // xi = s pa + t pb
                let det = cross(pa, pb);
                let s = cross(xi, pb) / det;
                let t = cross(pa, xi) / det;
                let (ga, psa) = self.vertices[k];
                let (gb, psb) = self.vertices[(k + 1) % n];
                let mut decomposition = Vec::with_capacity(2);
                let scale = s.abs() + t.abs();
                if s > 1e-14 * scale {
                    decomposition.push(Generator { lambda: s / psa, xi: ga });
                }
                if t > 1e-14 * scale {
                    decomposition.push(Generator { lambda: t / psb, xi: gb });
                }
                let value = decomposition
                    .iter()
                    .map(|g| g.lambda * if g.xi == ga { psa } else { psb })
                    .sum();
                return Ok(PhiSolution { value, decomposition, generator_radius: self.generator_radius });
            }
        }
        Err(Error::Internal("no hull edge spans the requested direction".into()))
    }

    pub fn phi(&self, xi: Vec2) -> f64 {
        self.solve(xi).map(|s| s.value).unwrap_or(f64::NAN)
    }

    /// `(min, max)` of `phi` over `n` equally spaced unit directions.
    pub fn unit_range(&self, n: usize) -> (f64, f64) {
        (0..n.max(1)).fold((f64::INFINITY, 0.0_f64), |(lo, hi), k| {
            let t = std::f64::consts::TAU * k as f64 / n.max(1) as f64;
            let v = self.phi(Vec2::new(t.cos(), t.sin()));
            (lo.min(v), hi.max(v))
        })
    }

    /// `sum_i phi(xi_i)` over the atoms of `mu`.
    pub fn relaxed_integral(&self, mu: &DislocationMeasure) -> f64 {
        relaxed_integral(mu, |xi| self.phi(xi))
    }
}

/// Monotone chain hull of the first components, counter-clockwise, without
/// collinear points.
fn convex_hull(mut pts: Vec<(Vec2, Vec2, f64)>) -> Vec<(Vec2, Vec2, f64)> {
    pts.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
    pts.dedup_by(|a, b| (a.0 - b.0).norm() <= 1e-15 * (1.0 + b.0.norm()));
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Vec2, a: Vec2, b: Vec2| cross(a - o, b - o);
    let mut lower: Vec<(Vec2, Vec2, f64)> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2].0, lower[lower.len() - 1].0, p.0) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<(Vec2, Vec2, f64)> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2].0, upper[upper.len() - 1].0, p.0) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// `phi(xi)` for one vector, building the hull on the fly.
pub fn phi(
    xi: Vec2,
    lattice: &BurgersLattice,
    psi: &dyn PsiOracle,
    generator_radius: Option<f64>,
) -> Result<PhiSolution> {
    Relaxation::new(lattice, psi, generator_radius)?.solve(xi)
}

/// `sum_i |xi_i| phi(xi_i / |xi_i|)`.
pub fn relaxed_integral(mu: &DislocationMeasure, phi: impl Fn(Vec2) -> f64) -> f64 {
    mu.atoms
        .iter()
        .map(|a| {
            let n = a.xi.norm();
            if n == 0.0 {
                0.0
            } else {
                n * phi(a.xi / n)
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso() -> QuadraticPsi {
        let s = 1.0 / (4.0 * std::f64::consts::PI);
        QuadraticPsi([[s, 0.0], [0.0, s]])
    }

    #[test]
    fn square_lattice_basis_values() {
        let lat = BurgersLattice::square();
        let rel = Relaxation::new(&lat, &iso(), None).unwrap();
        let s = 1.0 / (4.0 * std::f64::consts::PI);
        assert!((rel.phi(Vec2::new(1.0, 0.0)) - s).abs() < 1e-14);
        assert!((rel.phi(Vec2::new(1.0, 1.0)) - 2.0 * s).abs() < 1e-14);
        assert!(rel.vertices.len() == 4);
    }
}
