//! Quadrature of energy densities.
//!
//! Two integrators live here. [`annulus_integral`] uses polar coordinates
//! with Gauss-Legendre panels in `log r` and the trapezoid rule in the angle,
//! which is exact for `|K|^2` and spectrally accurate for smooth periodic
//! integrands. [`integrate`] is an adaptive quadtree over a polygon or disc
//! with excluded holes: cells are split until their size is below a fixed
//! fraction of the distance to the nearest singular point, and cells that
//! straddle a hole or an interface circle are refined further and masked
//! pointwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StrainField;
use crate::error::{Error, Result};
use crate::geom::{self, Mat2, Vec2};
use crate::model::{DislocationMeasure, Domain, ElasticTensor, EnergyReport};

/// `int_{B_r2(c) \ B_r1(c)} f dx` by Gauss-Legendre in `s = log r`
/// (`panels_per_unit` panels of `order` points per unit of `s`) and the
/// trapezoid rule with `n_theta` points in angle.
pub fn annulus_integral(
    center: Vec2,
    r1: f64,
    r2: f64,
    panels_per_unit: usize,
    order: usize,
    n_theta: usize,
    f: impl Fn(Vec2) -> f64,
) -> f64 {
    let (s1, s2) = (r1.ln(), r2.ln());
    let panels = (((s2 - s1) * panels_per_unit as f64).ceil() as usize).max(1);
    let ds = (s2 - s1) / panels as f64;
    let (gx, gw) = geom::gauss_legendre(order);
    let dt = 2.0 * std::f64::consts::PI / n_theta as f64;
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|j| {
            let t = (j as f64 + 0.5) * dt;
            (t.cos(), t.sin())
        })
        .collect();
    let mut total = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let a = s1 + p as f64 * ds;
        for (x, w) in gx.iter().zip(&gw) {
            let s = a + 0.5 * ds * (x + 1.0);
            let r = s.exp();
            let ring: f64 = trig.iter().map(|&(c, sn)| f(center + Vec2::new(c, sn) * r)).sum();
            total.push(ring * dt * r * r * 0.5 * ds * w);
        }
    }
    geom::pairwise_sum(&total)
}

/// `int |F|^2` over an annulus.
pub fn annulus_l2(
    center: Vec2,
    r1: f64,
    r2: f64,
    n_theta: usize,
    f: impl Fn(Vec2) -> Mat2,
) -> f64 {
    annulus_integral(center, r1, r2, 4, 8, n_theta, |x| f(x).norm_squared())
}

/// `int 1/2 C F : F` over an annulus.
pub fn annulus_energy(
    center: Vec2,
    r1: f64,
    r2: f64,
    n_theta: usize,
    c: &ElasticTensor,
    f: impl Fn(Vec2) -> Mat2,
) -> f64 {
    annulus_integral(center, r1, r2, 4, 8, n_theta, |x| c.density(&f(x)))
}

/// Integration region.
#[derive(Clone, Debug)]
pub enum Outer<'a> {
    Polygon(&'a Domain),
    Disc { center: Vec2, radius: f64 },
}

/// Geometry hints for the adaptive integrator.
#[derive(Clone, Debug)]
pub struct QuadGeometry<'a> {
    pub outer: Outer<'a>,
    /// Excluded open discs.
    pub holes: Vec<(Vec2, f64)>,
    /// Points near which the integrand behaves like `|x - p|^-2`.
    pub singular: Vec<Vec2>,
    /// Circles across which the integrand may jump.
    pub interfaces: Vec<(Vec2, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    /// Smallest cell near singular points.
    pub h_min: f64,
    /// Largest cell; defaults to a 32nd of the region diameter when `None`.
    pub h_max: Option<f64>,
    /// Cells near a singular point are at most `distance / k` wide.
    pub k: f64,
    /// Gauss points per direction in leaf cells.
    pub order: usize,
    /// Cells straddling an interface of radius `r` are at most `r * rel` wide.
    pub interface_rel: f64,
    /// Extra halvings applied to cells cut by a hole boundary.
    pub hole_levels: u32,
}

impl QuadOptions {
    pub fn new(h_min: f64) -> Self {
        QuadOptions { h_min, h_max: None, k: 3.0, order: 3, interface_rel: 1.0 / 64.0, hole_levels: 2 }
    }

    /// Uniformly finer options for the Richardson comparison.
    pub fn refined(&self) -> Self {
        QuadOptions {
            h_min: self.h_min * 0.5,
            h_max: self.h_max.map(|h| h * 0.5),
            k: self.k * 2.0,
            order: self.order,
            interface_rel: self.interface_rel * 0.5,
            hole_levels: self.hole_levels,
        }
    }
}

struct Prepared<'a> {
    geo: &'a QuadGeometry<'a>,
    opts: QuadOptions,
    h_boundary: f64,
    gx: Vec<f64>,
    gw: Vec<f64>,
}

impl Prepared<'_> {
    fn inside_outer(&self, p: Vec2) -> bool {
        match &self.geo.outer {
            Outer::Polygon(d) => d.contains(p),
            Outer::Disc { center, radius } => (p - center).norm_squared() < radius * radius,
        }
    }

    fn in_hole(&self, p: Vec2) -> bool {
        self.geo.holes.iter().any(|(c, r)| (p - c).norm_squared() < r * r)
    }

    fn cell(&self, p: Vec2, a: f64, f: &(impl Fn(Vec2) -> f64 + Sync), out: &mut Vec<f64>) {
        let diag = a * std::f64::consts::SQRT_2;
        let size = 2.0 * a;
        let partial_outer = match &self.geo.outer {
            Outer::Polygon(d) => {
                let db = d.dist_to_boundary(p);
                if db > diag && !d.contains(p) {
                    return;
                }
                db <= diag
            }
            Outer::Disc { center, radius } => {
                let d = (p - center).norm();
                if d - diag >= *radius {
                    return;
                }
                (d - radius).abs() <= diag
            }
        };
        let mut partial_hole = false;
        for (c, r) in &self.geo.holes {
            let d = (p - c).norm();
            if d + diag <= *r {
                return;
            }
            if d - diag < *r {
                partial_hole = true;
            }
        }
        let ds = self
            .geo
            .singular
            .iter()
            .map(|q| (p - q).norm())
            .fold(f64::INFINITY, f64::min);
        let mut refine = size > self.opts.h_max.unwrap_or(f64::INFINITY)
            || (size > self.opts.h_min && size * self.opts.k > ds - diag)
            || (partial_outer && size > self.h_boundary)
            || (partial_hole && size > self.opts.h_min / f64::from(1u32 << self.opts.hole_levels));
        if !refine && size > self.opts.h_min / 4.0 {
            for (c, r) in &self.geo.interfaces {
                if ((p - c).norm() - r).abs() <= diag && size > (r * self.opts.interface_rel).max(self.opts.h_min) {
                    refine = true;
                    break;
                }
            }
        }
        if refine && size > 1e-3 * self.opts.h_min {
            let h = 0.5 * a;
            for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
                self.cell(p + Vec2::new(sx * h, sy * h), h, f, out);
            }
            return;
        }
        let mut s = 0.0;
        let mask = partial_outer || partial_hole;
        for (xi, wi) in self.gx.iter().zip(&self.gw) {
            for (yj, wj) in self.gx.iter().zip(&self.gw) {
                let q = p + Vec2::new(xi * a, yj * a);
                if mask && (!self.inside_outer(q) || self.in_hole(q)) {
                    continue;
                }
                s += wi * wj * f(q);
            }
        }
        out.push(s * a * a);
    }
}

/// Adaptive quadrature of `f` over the region described by `geo`.
pub fn integrate(geo: &QuadGeometry, opts: &QuadOptions, f: impl Fn(Vec2) -> f64 + Sync) -> Result<f64> {
    if !(opts.h_min > 0.0) || !(opts.k > 0.0) || opts.order == 0 {
        return Err(Error::pre("invalid quadrature options"));
    }
    let (lo, hi) = match &geo.outer {
        Outer::Polygon(d) => d.bbox(),
        Outer::Disc { center, radius } => {
            (center - Vec2::repeat(*radius), center + Vec2::repeat(*radius))
        }
    };
    let ext = hi - lo;
    let diam = ext.x.max(ext.y);
    let h_max = opts.h_max.unwrap_or(diam / 32.0).max(opts.h_min);
    let nx = ((ext.x / h_max).ceil() as usize).max(1);
    let ny = ((ext.y / h_max).ceil() as usize).max(1);
    let root = (ext.x / nx as f64).max(ext.y / ny as f64);
    let (gx, gw) = geom::gauss_legendre(opts.order);
    let prep = Prepared {
        geo,
        opts: QuadOptions { h_max: Some(h_max), ..*opts },
        h_boundary: (h_max / 16.0).max(opts.h_min),
        gx,
        gw,
    };
    let partial: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let p = lo + Vec2::new((i as f64 + 0.5) * root, (j as f64 + 0.5) * root);
            let mut out = Vec::new();
            prep.cell(p, 0.5 * root, &f, &mut out);
            geom::pairwise_sum(&out)
        })
        .collect();
    Ok(geom::pairwise_sum(&partial))
}

/// Energy together with the relative change under uniform refinement.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub report: EnergyReport,
    pub refined_elastic: f64,
    pub rel_change: f64,
}

/// Regularized energy `F_eps(mu, beta)` over `Omega_eps(mu)`, with the
/// elastic part measured at `opts` and at `opts.refined()`.
pub fn energy_f_eps(
    mu: &DislocationMeasure,
    beta: &StrainField,
    omega: &Domain,
    eps: f64,
    c: &ElasticTensor,
    opts: &QuadOptions,
) -> Result<EnergyEstimate> {
    if !(eps > 0.0) {
        return Err(Error::pre("core radius must be positive"));
    }
    if opts.h_min > eps / 4.0 {
        return Err(Error::pre(format!("h_min = {} exceeds eps/4 = {}", opts.h_min, eps / 4.0)));
    }
    let core = mu.total_variation();
    if mu.is_empty() && beta.terms.is_empty() && beta.levels.is_empty() && beta.overlays.is_empty()
        && beta.background == Mat2::zeros()
    {
        return Ok(EnergyEstimate {
            report: EnergyReport::new(0.0, 0.0, eps),
            refined_elastic: 0.0,
            rel_change: 0.0,
        });
    }
    let geo = field_geometry(beta, Outer::Polygon(omega), &mu.positions(), eps);
    let density = |x: Vec2| c.density(&beta.eval(x));
    let e1 = integrate(&geo, opts, density)?;
    let e2 = integrate(&geo, &opts.refined(), density)?;
    let rel = if e2 > 0.0 { (e1 - e2).abs() / e2 } else { (e1 - e2).abs() };
    Ok(EnergyEstimate {
        report: EnergyReport::new(e2, core, eps),
        refined_elastic: e2,
        rel_change: rel,
    })
}

/// Quadrature geometry for a strain field: the active cores of radius `eps`
/// around `extra_cores` and the field's own cores are holes.
pub fn field_geometry<'a>(
    beta: &StrainField,
    outer: Outer<'a>,
    extra_cores: &[Vec2],
    eps: f64,
) -> QuadGeometry<'a> {
    let mut holes: Vec<(Vec2, f64)> = beta.active_cores().into_iter().map(|c| (c, beta.eps)).collect();
    for c in extra_cores {
        let covered = beta.levels.iter().flatten().any(|p| (c - p.ext.center).norm() + eps <= p.ext.rho);
        if !covered && !holes.iter().any(|(h, _)| h == c) {
            holes.push((*c, eps));
        }
    }
    QuadGeometry {
        outer,
        holes,
        singular: beta.active_singularities(),
        interfaces: beta.interfaces(),
    }
}
