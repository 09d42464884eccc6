//! Lower bounds on the Korn constant of an annulus.
//!
//! The constant is the best `K` in `int |grad u - W|^2 <= K int |sym grad u|^2`
//! with `W` the optimal skew matrix, which is the mean skew part of `grad u`.
//! On the bilinear log-polar space we maximize the Rayleigh quotient
//! `N(u) / D'(u)` with `N(u) = int |grad u - W(u)|^2` and
//! `D'(u) = int |sym grad u|^2 + int |W(u)|^2`. Since `D' >= D` the maximum
//! is a lower bound on `K`, and it is at least 1 because the constraint
//! `W(u) = 0` leaves `N = D' >= D`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::fem::LogPolarMesh;
use super::Discretization;
use crate::error::{Error, Result};
use crate::geom::{self, Mat2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KornEstimate {
    pub ratio: f64,
    /// Lower bound on `K(ratio)`.
    pub estimate: f64,
    pub method: String,
    pub n_theta: usize,
    pub n_radial: usize,
    /// Measured upper bound, when a method certifies one.
    pub upper: Option<f64>,
}

impl KornEstimate {
    pub fn label(&self) -> &'static str {
        "estimate (lower bound)"
    }
}

/// Default resolution for Korn estimates: the dense eigen-solve scales with
/// the cube of the number of unknowns.
pub fn korn_discretization() -> Discretization {
    Discretization { n_theta: 24, per_unit_s: 8.0, min_radial: 4, n_radial: None }
}

pub fn korn_constant_estimate(ratio: f64, disc: &Discretization) -> Result<KornEstimate> {
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::pre("Korn ratio must exceed 1"));
    }
    if disc.n_theta < 4 {
        return Err(Error::pre("angular resolution must be at least 4"));
    }
    let len = ratio.ln();
    let mesh = LogPolarMesh::new(1.0, ratio, disc.radial(len), disc.n_theta);
    let n = mesh.dofs();
    if n > 6000 {
        return Err(Error::Resource(format!("{n} unknowns is too many for a dense eigen-solve")));
    }
    let mut grad = DMatrix::<f64>::zeros(n, n);
    let mut symm = DMatrix::<f64>::zeros(n, n);
    let mut sk = vec![0.0; n];
    let (hs, ht) = (mesh.hs(), mesh.ht());
    let gs = geom::gauss_on(0.0, 1.0, 2);
    let gt = geom::gauss_on(0.0, 1.0, 4);
    for i in 0..mesh.n_s {
        for j in 0..mesh.n_theta {
            let nodes =
                [mesh.node(i, j), mesh.node(i + 1, j), mesh.node(i, j + 1), mesh.node(i + 1, j + 1)];
            for (xi, ws) in &gs {
                let r = (mesh.s0 + (i as f64 + xi) * hs).exp();
                for (eta, wt) in &gt {
                    let theta = (j as f64 + eta) * ht;
                    let (cs, sn) = (theta.cos(), theta.sin());
                    let w = ws * wt * hs * ht;
                    let derivs = [
                        (-(1.0 - eta) / hs, -(1.0 - xi) / ht),
                        ((1.0 - eta) / hs, -xi / ht),
                        (-eta / hs, (1.0 - xi) / ht),
                        (eta / hs, xi / ht),
                    ];
                    // r grad of each scalar basis function times e_k
                    let mut dof = [0usize; 8];
                    let mut mats = [Mat2::zeros(); 8];
                    for (a, &(ds, dt)) in derivs.iter().enumerate() {
                        let g = [cs * ds - sn * dt, sn * ds + cs * dt];
                        for k in 0..2 {
                            dof[2 * a + k] = 2 * nodes[a] + k;
                            mats[2 * a + k][(k, 0)] = g[0];
                            mats[2 * a + k][(k, 1)] = g[1];
                        }
                    }
                    let syms: Vec<Mat2> = mats.iter().map(geom::sym).collect();
                    for p in 0..8 {
                        sk[dof[p]] += w * r * geom::skew_coord(&mats[p]);
                        for q in 0..8 {
                            grad[(dof[p], dof[q])] += w * geom::ddot(&mats[p], &mats[q]);
                            symm[(dof[p], dof[q])] += w * geom::ddot(&syms[p], &syms[q]);
                        }
                    }
                }
            }
        }
    }
    let area = std::f64::consts::PI * (ratio * ratio - 1.0);
    // int |W(u)|^2 = 2 (sk . u)^2 / area
    let pinned = [2 * mesh.node(0, 0), 2 * mesh.node(0, 0) + 1];
    let keep: Vec<usize> = (0..n).filter(|d| !pinned.contains(d)).collect();
    let m = keep.len();
    let mut num = DMatrix::<f64>::zeros(m, m);
    let mut den = DMatrix::<f64>::zeros(m, m);
    for (a, &p) in keep.iter().enumerate() {
        for (b, &q) in keep.iter().enumerate() {
            let wpen = 2.0 * sk[p] * sk[q] / area;
            num[(a, b)] = grad[(p, q)] - wpen;
            den[(a, b)] = symm[(p, q)] + wpen;
        }
    }
    let chol = den
        .clone()
        .cholesky()
        .ok_or_else(|| Error::num("degenerate subspace: symmetric-gradient form is singular"))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::num("degenerate subspace: triangular factor not invertible"))?;
    let reduced = &linv * num * linv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);
    let estimate = eig.eigenvalues.max();
    if !estimate.is_finite() {
        return Err(Error::num("Korn eigenvalue is not finite"));
    }
    Ok(KornEstimate {
        ratio,
        estimate,
        method: "eigen".into(),
        n_theta: mesh.n_theta,
        n_radial: mesh.n_s,
        upper: None,
    })
}
