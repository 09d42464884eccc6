//! Variational problems on annuli: the cell energies `psi_{r1,r2}`, the
//! renormalized self-energy `psi`, Korn constant estimates and the harmonic
//! gradient extension used by strain surgery.
//!
//! The admissible strains are parametrized as `eta = K_xi + grad u` with `u`
//! single valued, which makes `eta` curl free with circulation `xi` by
//! construction; the constrained problem turns into an unconstrained
//! quadratic minimization.

pub mod banded;
mod extension;
mod fem;
mod korn;
pub mod oracle;

pub use extension::{
    harmonic_gradient_extension, harmonic_gradient_extension_with_breaks, ExtensionOptions,
    ExtensionResult,
};
pub use korn::{korn_constant_estimate, korn_discretization, KornEstimate};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::ElasticTensor;

/// Default `delta` ladder for the renormalized limit.
pub const DEFAULT_LADDER: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Resolution of the log-polar discretization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub n_theta: usize,
    /// Radial elements per unit of `log r`.
    pub per_unit_s: f64,
    /// Lower bound on the number of radial elements.
    pub min_radial: usize,
    /// Fixed number of radial elements, overriding `per_unit_s`.
    #[serde(default)]
    pub n_radial: Option<usize>,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization { n_theta: 64, per_unit_s: 16.0, min_radial: 8, n_radial: None }
    }
}

impl Discretization {
    pub fn coarse() -> Self {
        Discretization { n_theta: 32, per_unit_s: 8.0, min_radial: 4, n_radial: None }
    }

    pub fn refined(&self) -> Self {
        Discretization {
            n_theta: 2 * self.n_theta,
            per_unit_s: 2.0 * self.per_unit_s,
            min_radial: 2 * self.min_radial,
            n_radial: self.n_radial.map(|n| 2 * n),
        }
    }

    pub(crate) fn radial(&self, len: f64) -> usize {
        if let Some(n) = self.n_radial {
            return n.max(1);
        }
        ((len * self.per_unit_s - 1e-9).ceil() as usize).max(self.min_radial)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnulusProblem {
    pub xi: Vec2,
    pub r1: f64,
    pub r2: f64,
    pub c: ElasticTensor,
    pub disc: Discretization,
}

impl AnnulusProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r1 < self.r2) || !self.r2.is_finite() {
            return Err(Error::pre("annulus needs 0 < r1 < r2"));
        }
        if self.disc.n_theta < 4 || self.disc.min_radial < 1 || self.disc.n_radial.is_some_and(|n| n < 4) || !(self.disc.per_unit_s > 0.0) {
            return Err(Error::pre("resolution too small"));
        }
        Ok(())
    }
}

/// Minimizer of the cell problem for one Burgers vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnulusSolution {
    pub value: f64,
    /// Energy quadratic form: `value = xi^T form xi`.
    pub form: [[f64; 2]; 2],
    /// Per radial node, per angular mode `m = 0..=modes`, the complex Fourier
    /// coefficients `(re, im)` of the two correction components.
    pub coefficients: Vec<Vec<[[f64; 2]; 2]>>,
    /// Relative residual of the discrete optimality system.
    pub residual: f64,
    pub n_radial: usize,
    pub n_theta: usize,
}

/// Quadratic form `Q` with `psi_{r1,r2}(xi) = xi^T Q xi`, from one
/// factorization.
pub fn psi_form(r1: f64, r2: f64, c: &ElasticTensor, disc: &Discretization) -> Result<Matrix2<f64>> {
    Ok(solve_form_raw(r1, r2, c, disc)?.0.q)
}

fn solve_form_raw(
    r1: f64,
    r2: f64,
    c: &ElasticTensor,
    disc: &Discretization,
) -> Result<(fem::FormSolution, fem::LogPolarMesh)> {
    let len = (r2 / r1).ln();
    let mesh = fem::LogPolarMesh::new(r1, r2, disc.radial(len), disc.n_theta);
    Ok((fem::solve_form(&mesh, c)?, mesh))
}

/// Minimizes `1/2 int C eta : eta` over `eta = K_xi + grad u` on `B_r2 \ B_r1`.
pub fn solve_psi_annulus(p: &AnnulusProblem) -> Result<AnnulusSolution> {
    p.validate()?;
    let (sol, mesh) = solve_form_raw(p.r1, p.r2, &p.c, &p.disc)?;
    let q = sol.q;
    let value = if p.xi == Vec2::zeros() { 0.0 } else { p.xi.dot(&(q * p.xi)).max(0.0) };
    let modes = (mesh.n_theta / 2).min(16);
    let mut coefficients = Vec::with_capacity(mesh.n_s + 1);
    for i in 0..=mesh.n_s {
        let mut ring = vec![[[0.0; 2]; 2]; modes + 1];
        for j in 0..mesh.n_theta {
            let node = mesh.node(i, j);
            let theta = j as f64 * mesh.ht();
            for k in 0..2 {
                let val = p.xi.x * sol.u[0][2 * node + k] + p.xi.y * sol.u[1][2 * node + k];
                for (m, slot) in ring.iter_mut().enumerate() {
                    let (s, cth) = (m as f64 * theta).sin_cos();
                    slot[k][0] += val * cth / mesh.n_theta as f64;
                    slot[k][1] -= val * s / mesh.n_theta as f64;
                }
            }
        }
        coefficients.push(ring);
    }
    Ok(AnnulusSolution {
        value,
        form: [[q[(0, 0)], q[(0, 1)]], [q[(1, 0)], q[(1, 1)]]],
        coefficients,
        residual: sol.residual,
        n_radial: mesh.n_s,
        n_theta: mesh.n_theta,
    })
}

/// `psi(xi, delta) = psi_{delta, 1}(xi)`.
pub fn psi_delta(xi: Vec2, delta: f64, c: &ElasticTensor, disc: &Discretization) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::pre("delta must lie in (0, 1)"));
    }
    if xi == Vec2::zeros() {
        return Ok(0.0);
    }
    let q = psi_form(delta, 1.0, c, disc)?;
    Ok(xi.dot(&(q * xi)).max(0.0))
}

/// Renormalized self-energy from a least-squares fit
/// `psi(xi, delta) = slope |log delta| + intercept` over a ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiLimit {
    /// Slope form: `psi(xi) = xi^T slope xi`.
    pub slope: [[f64; 2]; 2],
    pub intercept: [[f64; 2]; 2],
    pub ladder: Vec<f64>,
    /// `psi(xi, delta)` forms on the ladder.
    pub forms: Vec<[[f64; 2]; 2]>,
    /// Largest fit residual of `xi^T Q(delta) xi` over unit `xi`.
    pub max_residual: f64,
}

fn to_arr(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn from_arr(a: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1])
}

impl PsiLimit {
    pub fn compute(c: &ElasticTensor, ladder: &[f64], disc: &Discretization) -> Result<Self> {
        if ladder.len() < 2 {
            return Err(Error::pre("ladder needs at least two values"));
        }
        if ladder.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(Error::pre("ladder values must lie in (0, 1)"));
        }
        let forms: Vec<Matrix2<f64>> = {
            use rayon::prelude::*;
            ladder
                .par_iter()
                .map(|&d| psi_form(d, 1.0, c, disc))
                .collect::<Result<Vec<_>>>()?
        };
        let xs: Vec<f64> = ladder.iter().map(|d| -d.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let mut slope = Matrix2::zeros();
        let mut intercept = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                let ys: Vec<f64> = forms.iter().map(|q| q[(a, b)]).collect();
                let my = ys.iter().sum::<f64>() / n;
                let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
                slope[(a, b)] = sxy / sxx;
                intercept[(a, b)] = my - slope[(a, b)] * mx;
            }
        }
        // residual form per ladder point; the worst unit direction is its
        // spectral radius
        let mut max_residual: f64 = 0.0;
        for (q, x) in forms.iter().zip(&xs) {
            let r = q - slope * *x - intercept;
            let r = (r + r.transpose()) * 0.5;
            let eig = nalgebra::SymmetricEigen::new(r);
            max_residual = max_residual.max(eig.eigenvalues.abs().max());
        }
        // the values must grow along the ladder in every direction
        for w in forms.windows(2).zip(xs.windows(2)) {
            let (f, x) = w;
            if x[1] > x[0] {
                let d = f[1] - f[0];
                let eig = nalgebra::SymmetricEigen::new((d + d.transpose()) * 0.5);
                if eig.eigenvalues.min() <= 0.0 {
                    return Err(Error::num("psi(xi, delta) is not increasing along the ladder"));
                }
            }
        }
        let se = nalgebra::SymmetricEigen::new((slope + slope.transpose()) * 0.5);
        if se.eigenvalues.min() <= 0.0 {
            return Err(Error::num("fitted self-energy is not positive definite"));
        }
        Ok(PsiLimit {
            slope: to_arr(&((slope + slope.transpose()) * 0.5)),
            intercept: to_arr(&intercept),
            ladder: ladder.to_vec(),
            forms: forms.iter().map(to_arr).collect(),
            max_residual,
        })
    }

    /// `psi(xi)`.
    pub fn value(&self, xi: Vec2) -> f64 {
        xi.dot(&(from_arr(&self.slope) * xi))
    }

    /// Fit residual bound `max_residual |xi|^2`.
    pub fn error(&self, xi: Vec2) -> f64 {
        self.max_residual * xi.norm_squared()
    }

    pub fn slope_matrix(&self) -> Matrix2<f64> {
        from_arr(&self.slope)
    }
}

/// `(psi(xi), fit error)` on the default ladder.
pub fn psi_limit(xi: Vec2, c: &ElasticTensor, disc: &Discretization) -> Result<(f64, f64)> {
    if xi == Vec2::zeros() {
        return Ok((0.0, 0.0));
    }
    let lim = PsiLimit::compute(c, &DEFAULT_LADDER, disc)?;
    Ok((lim.value(xi), lim.error(xi)))
}

/// `psi_{r1,r2}` for a fixed ratio as a cheap closure, used by lower-bound
/// estimators that need many cell energies of the same ratio.
#[derive(Clone, Debug)]
pub struct CellEnergy {
    pub ratio: f64,
    pub form: Matrix2<f64>,
}

impl CellEnergy {
    pub fn new(ratio: f64, c: &ElasticTensor, disc: &Discretization) -> Result<Self> {
        if !(ratio > 1.0) {
            return Err(Error::pre("cell ratio must exceed 1"));
        }
        Ok(CellEnergy { ratio, form: psi_form(1.0, ratio, c, disc)? })
    }

    pub fn value(&self, xi: Vec2) -> f64 {
        xi.dot(&(self.form * xi)).max(0.0)
    }
}
