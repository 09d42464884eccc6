//! Evaluable strain fields.
//!
//! A [`StrainField`] is built in layers. The base layer is a superposition of
//! singular fields `K_i`, forced to zero inside the cores, plus a constant
//! background and constant disc overlays. On top sit levels of harmonic
//! patches produced by strain surgery; a patch replaces the field inside its
//! matching circle by a smooth gradient and may subtract a singular field on
//! the surrounding annulus.

mod quadrature;

pub use quadrature::{
    annulus_energy, annulus_integral, annulus_l2, energy_f_eps, field_geometry, integrate, EnergyEstimate,
    Outer, QuadGeometry, QuadOptions,
};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat2, Vec2};
use crate::model::DislocationMeasure;

const INV_2PI: f64 = 0.5 * std::f64::consts::FRAC_1_PI;

/// The singular field `K(x) = (1/2pi) xi (x) J(x - c) / |x - c|^2`, where
/// `J(a, b) = (b, -a)` is the clockwise quarter turn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KField {
    pub xi: Vec2,
    pub center: Vec2,
}

impl KField {
    pub fn new(xi: Vec2, center: Vec2) -> Self {
        KField { xi, center }
    }

    pub fn eval(&self, x: Vec2) -> Result<Mat2> {
        if x == self.center {
            return Err(Error::pre("K-field evaluated at its center"));
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: Vec2) -> Mat2 {
        let d = x - self.center;
        let s = INV_2PI / d.norm_squared();
        let j = geom::rot_cw(d) * s;
        self.xi * j.transpose()
    }
}

/// Smooth gradient `grad v` on a disc, where each displacement component is
/// `v_k = u0_k + Re sum_{m>=1} a_{k,m} ((x - c)/rho)^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicExtension {
    pub center: Vec2,
    pub rho: f64,
    pub u0: [f64; 2],
    pub coeffs: [Vec<Complex<f64>>; 2],
    /// Skew coordinate `w` of the constant `W = [[0, w], [-w, 0]]`.
    pub w: f64,
}

impl HarmonicExtension {
    pub fn modes(&self) -> usize {
        self.coeffs[0].len()
    }

    /// `grad v(x)` without the skew constant.
    pub fn grad(&self, x: Vec2) -> Mat2 {
        let z = (x - self.center) / self.rho;
        let z = Complex::new(z.x, z.y);
        let mut m = Mat2::zeros();
        for k in 0..2 {
            let a = &self.coeffs[k];
            let mut g = Complex::new(0.0, 0.0);
            for (idx, c) in a.iter().enumerate().rev() {
                g = g * z + c * (idx as f64 + 1.0);
            }
            let g = g / self.rho;
            m[(k, 0)] = g.re;
            m[(k, 1)] = -g.im;
        }
        m
    }

    /// `grad v(x) + W`.
    pub fn strain(&self, x: Vec2) -> Mat2 {
        self.grad(x) + geom::skew_from(self.w)
    }

    pub fn displacement(&self, x: Vec2) -> Vec2 {
        let z = (x - self.center) / self.rho;
        let z = Complex::new(z.x, z.y);
        let mut out = Vec2::new(self.u0[0], self.u0[1]);
        for k in 0..2 {
            let mut f = Complex::new(0.0, 0.0);
            for c in self.coeffs[k].iter().rev() {
                f = (f + c) * z;
            }
            out[k] += f.re;
        }
        out
    }

    /// `int_{B_rho} |grad v|^2 = pi sum_m m |a_m|^2`.
    pub fn dirichlet_energy(&self) -> f64 {
        let mut e = 0.0;
        for k in 0..2 {
            for (idx, c) in self.coeffs[k].iter().enumerate() {
                e += (idx as f64 + 1.0) * c.norm_sqr();
            }
        }
        std::f64::consts::PI * e
    }
}

/// Surgery patch: inside `ext.rho` the field is `grad v + W`; on the annulus
/// `ext.rho <= |x - c| < r_out` it is the lower level minus `subtract`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub ext: HarmonicExtension,
    pub r_out: f64,
    pub subtract: Option<KField>,
}

impl Patch {
    pub fn center(&self) -> Vec2 {
        self.ext.center
    }
}

/// Constant matrix added on an open disc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscOverlay {
    pub center: Vec2,
    pub radius: f64,
    pub value: Mat2,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrainField {
    pub terms: Vec<KField>,
    /// Centres of the cores `B_eps(x_i)` in which the base layer vanishes.
    pub cores: Vec<Vec2>,
    pub eps: f64,
    pub background: Mat2,
    pub overlays: Vec<DiscOverlay>,
    /// Patch levels, applied bottom to top; patches of one level are disjoint.
    pub levels: Vec<Vec<Patch>>,
}

impl StrainField {
    pub fn zero() -> Self {
        StrainField::default()
    }

    /// `sum_i K_{xi_i, x_i}`, zeroed inside `union_i B_eps(x_i)`.
    pub fn superposition(mu: &DislocationMeasure, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::pre("core radius must be positive"));
        }
        Ok(StrainField {
            terms: mu.atoms.iter().map(|a| KField::new(a.xi, a.x)).collect(),
            cores: mu.positions(),
            eps,
            ..Default::default()
        })
    }

    pub fn with_background(mut self, w: Mat2) -> Self {
        self.background = w;
        self
    }

    pub fn with_overlay(mut self, o: DiscOverlay) -> Self {
        self.overlays.push(o);
        self
    }

    pub fn push_level(&mut self, patches: Vec<Patch>) {
        if !patches.is_empty() {
            self.levels.push(patches);
        }
    }

    pub fn in_core(&self, x: Vec2) -> bool {
        let e2 = self.eps * self.eps;
        self.cores.iter().any(|c| (x - c).norm_squared() < e2)
    }

    /// Cores that are not covered by the inner disc of some patch.
    pub fn active_cores(&self) -> Vec<Vec2> {
        self.cores
            .iter()
            .copied()
            .filter(|c| {
                !self.levels.iter().flatten().any(|p| {
                    (c - p.ext.center).norm() + self.eps <= p.ext.rho
                })
            })
            .collect()
    }

    /// Centres of singular terms outside every patch inner disc.
    pub fn active_singularities(&self) -> Vec<Vec2> {
        self.terms
            .iter()
            .map(|k| k.center)
            .filter(|c| !self.levels.iter().flatten().any(|p| (c - p.ext.center).norm() < p.ext.rho))
            .collect()
    }

    /// Circles across which the field may jump.
    pub fn interfaces(&self) -> Vec<(Vec2, f64)> {
        let mut out: Vec<(Vec2, f64)> =
            self.overlays.iter().map(|o| (o.center, o.radius)).collect();
        for p in self.levels.iter().flatten() {
            out.push((p.ext.center, p.ext.rho));
            if p.r_out > p.ext.rho {
                out.push((p.ext.center, p.r_out));
            }
        }
        out
    }

    fn base(&self, x: Vec2) -> Mat2 {
        if self.in_core(x) {
            return Mat2::zeros();
        }
        let mut m = self.background;
        for k in &self.terms {
            m += k.eval_unchecked(x);
        }
        for o in &self.overlays {
            if (x - o.center).norm_squared() < o.radius * o.radius {
                m += o.value;
            }
        }
        m
    }

    fn eval_level(&self, x: Vec2, level: usize) -> Mat2 {
        if level == 0 {
            return self.base(x);
        }
        for p in &self.levels[level - 1] {
            let d2 = (x - p.ext.center).norm_squared();
            if d2 < p.ext.rho * p.ext.rho {
                return p.ext.strain(x);
            }
            if d2 < p.r_out * p.r_out {
                let lower = self.eval_level(x, level - 1);
                return match &p.subtract {
                    Some(k) => lower - k.eval_unchecked(x),
                    None => lower,
                };
            }
        }
        self.eval_level(x, level - 1)
    }

    pub fn eval(&self, x: Vec2) -> Mat2 {
        self.eval_level(x, self.levels.len())
    }

    /// Field below the top `skip` patch levels.
    pub fn eval_below(&self, x: Vec2, skip: usize) -> Mat2 {
        self.eval_level(x, self.levels.len().saturating_sub(skip))
    }
}

/// Closed polygon approximating a circle, counter-clockwise.
pub fn circle_loop(center: Vec2, radius: f64, n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            center + Vec2::new(t.cos(), t.sin()) * radius
        })
        .collect()
}

/// `int beta tau dH^1` over a closed polygonal loop, with `order` Gauss
/// points per edge. The tangent is oriented clockwise, which makes the
/// circulation of `K_xi` around its centre equal to `+xi`.
pub fn circulation(field: &StrainField, lp: &[Vec2], order: usize) -> Result<Vec2> {
    circulation_with(|x| field.eval(x), &field.active_cores(), field.eps, lp, order)
}

/// Circulation of an arbitrary matrix field; `cores` of radius `eps` must be
/// avoided by the loop.
pub fn circulation_with(
    f: impl Fn(Vec2) -> Mat2,
    cores: &[Vec2],
    eps: f64,
    lp: &[Vec2],
    order: usize,
) -> Result<Vec2> {
    if lp.len() < 3 {
        return Err(Error::pre("loop needs at least three vertices"));
    }
    let n = lp.len();
    for i in 0..n {
        let (a, b) = (lp[i], lp[(i + 1) % n]);
        for c in cores {
            if geom::dist_point_segment(*c, a, b) <= eps {
                return Err(Error::pre("loop intersects a core"));
            }
        }
    }
    let clockwise = geom::signed_area(lp) < 0.0;
    let (gx, gw) = geom::gauss_legendre(order.max(1));
    let mut total = Vec2::zeros();
    for i in 0..n {
        let (mut a, mut b) = (lp[i], lp[(i + 1) % n]);
        if !clockwise {
            std::mem::swap(&mut a, &mut b);
        }
        let d = b - a;
        let mut seg = Vec2::zeros();
        for (x, w) in gx.iter().zip(&gw) {
            let p = a + d * (0.5 * (x + 1.0));
            seg += f(p) * d * (0.5 * w);
        }
        total += seg;
    }
    Ok(total)
}

/// `int_{dB_r(c)} |K| dH^1` by the trapezoid rule; equals `|xi|`.
pub fn boundary_mass_k(k: &KField, center: Vec2, radius: f64, n: usize) -> Result<f64> {
    if (center - k.center).norm() > 1e-12 * radius.max(1.0) {
        return Err(Error::pre("circle must be centred at the K-field centre"));
    }
    if !(radius > 0.0) {
        return Err(Error::pre("circle radius must be positive"));
    }
    let n = n.max(8);
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let s: f64 = (0..n)
        .map(|j| {
            let t = j as f64 * h;
            k.eval_unchecked(center + Vec2::new(t.cos(), t.sin()) * radius).norm()
        })
        .sum();
    Ok(s * h * radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_field_reference_value() {
        let k = KField::new(Vec2::new(1.0, 0.0), Vec2::zeros());
        let m = k.eval(Vec2::new(1.0, 0.0)).unwrap();
        let expect = Mat2::new(0.0, -1.0, 0.0, 0.0) * INV_2PI;
        assert!((m - expect).norm() < 1e-16);
        assert!(k.eval(Vec2::zeros()).is_err());
    }

    #[test]
    fn circulation_of_single_field() {
        let mu = DislocationMeasure::new(vec![crate::model::Atom::new(
            Vec2::zeros(),
            Vec2::new(1.0, 0.0),
        )]);
        let f = StrainField::superposition(&mu, 1e-3).unwrap();
        let c = circulation(&f, &circle_loop(Vec2::zeros(), 1.0, 256), 8).unwrap();
        assert!((c - Vec2::new(1.0, 0.0)).norm() < 1e-8);
        let far = circulation(&f, &circle_loop(Vec2::new(3.0, 0.0), 1.0, 256), 8).unwrap();
        assert!(far.norm() < 1e-8);
    }

    #[test]
    fn harmonic_extension_gradient_matches_displacement() {
        let ext = HarmonicExtension {
            center: Vec2::new(0.2, -0.1),
            rho: 0.5,
            u0: [0.0, 0.0],
            coeffs: [
                vec![Complex::new(0.3, -0.2), Complex::new(0.1, 0.05)],
                vec![Complex::new(-0.4, 0.1), Complex::new(0.0, 0.2)],
            ],
            w: 0.0,
        };
        let x = Vec2::new(0.35, 0.05);
        let h = 1e-6;
        let g = ext.grad(x);
        for l in 0..2 {
            let mut e = Vec2::zeros();
            e[l] = h;
            let fd = (ext.displacement(x + e) - ext.displacement(x - e)) / (2.0 * h);
            for k in 0..2 {
                assert!((fd[k] - g[(k, l)]).abs() < 1e-8);
            }
        }
    }
}
