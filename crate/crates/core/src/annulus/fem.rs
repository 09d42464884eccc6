//! Conforming finite elements on an annulus in log-polar coordinates.
//!
//! With `s = log r`, the scaled gradient `r grad u` and the scaled singular
//! field `r K` depend only on the angle and on derivatives in `(s, theta)`,
//! so the energy `1/2 int C eta : eta dx` becomes an integral over the
//! rectangle `[log r1, log r2] x [0, 2pi)` with no explicit `r`. Bilinear
//! elements in `(s, theta)` therefore give values that depend on `r1, r2`
//! only through `log(r2 / r1)`, which is the scaling identity.

use nalgebra::{Matrix2, Vector3};

use super::banded::BandedSpd;
use crate::error::Result;
use crate::geom::{self, Mat2};
use crate::model::ElasticTensor;

const INV_2PI: f64 = 0.5 * std::f64::consts::FRAC_1_PI;

/// Gauss points per element in `s` and in `theta`.
const GAUSS_S: usize = 2;
const GAUSS_T: usize = 4;

#[derive(Clone, Debug)]
pub struct LogPolarMesh {
    pub s0: f64,
    pub s1: f64,
    pub n_s: usize,
    pub n_theta: usize,
}

impl LogPolarMesh {
    pub fn new(r1: f64, r2: f64, n_s: usize, n_theta: usize) -> Self {
        LogPolarMesh { s0: r1.ln(), s1: r2.ln(), n_s, n_theta }
    }

    pub fn nodes(&self) -> usize {
        (self.n_s + 1) * self.n_theta
    }

    pub fn dofs(&self) -> usize {
        2 * self.nodes()
    }

    /// Position of angular index `j` in the interleaved order
    /// `0, 1, N-1, 2, N-2, ...` that keeps periodic neighbours close.
    fn slot(&self, j: usize) -> usize {
        let n = self.n_theta;
        if j == 0 {
            0
        } else if j <= n / 2 {
            2 * j - 1
        } else {
            2 * (n - j)
        }
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + self.slot(j % self.n_theta)
    }

    pub fn bandwidth(&self) -> usize {
        2 * (self.n_theta + 3) + 1
    }

    pub fn hs(&self) -> f64 {
        (self.s1 - self.s0) / self.n_s as f64
    }

    pub fn ht(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_theta as f64
    }
}

#[inline]
fn voigt(f: &Mat2) -> Vector3<f64> {
    Vector3::new(f[(0, 0)], f[(1, 1)], std::f64::consts::SQRT_2 * 0.5 * (f[(0, 1)] + f[(1, 0)]))
}

/// Assembled quadratic energy `1/2 u^T A u + u^T B xi + xi^T E xi`.
pub struct Assembled {
    pub a: BandedSpd,
    /// Load columns for `xi = e1` and `xi = e2`.
    pub b: [Vec<f64>; 2],
    pub e: Matrix2<f64>,
}

/// Assembles the stiffness `A`, the loads `B` and the singular-field energy
/// `E` on `mesh`. When `with_k` is false only `A` is meaningful.
pub fn assemble(mesh: &LogPolarMesh, c: &ElasticTensor) -> Assembled {
    let m = c.sym_matrix();
    let n = mesh.dofs();
    let mut a = BandedSpd::zeros(n, mesh.bandwidth());
    let mut b = [vec![0.0; n], vec![0.0; n]];
    let mut e = Matrix2::zeros();
    let (hs, ht) = (mesh.hs(), mesh.ht());
    let gs = geom::gauss_on(0.0, 1.0, GAUSS_S);
    let gt = geom::gauss_on(0.0, 1.0, GAUSS_T);
    for j in 0..mesh.n_theta {
        for (eta, wt) in &gt {
            let theta = (j as f64 + eta) * ht;
            let (cs, sn) = (theta.cos(), theta.sin());
            // r K for xi = e_m is e_m (x) (sin, -cos) / 2pi
            let q = [sn * INV_2PI, -cs * INV_2PI];
            let mut rk = [Mat2::zeros(), Mat2::zeros()];
            for (mm, rkm) in rk.iter_mut().enumerate() {
                rkm[(mm, 0)] = q[0];
                rkm[(mm, 1)] = q[1];
            }
            let vk = [voigt(&rk[0]), voigt(&rk[1])];
            let mvk = [m * vk[0], m * vk[1]];
            for i in 0..mesh.n_s {
                let nodes = [
                    mesh.node(i, j),
                    mesh.node(i + 1, j),
                    mesh.node(i, j + 1),
                    mesh.node(i + 1, j + 1),
                ];
                for (xi, ws) in &gs {
                    let w = ws * wt * hs * ht;
                    // bilinear shape functions and their (s, theta) derivatives
                    let sh = [
                        ((1.0 - xi) * (1.0 - eta), -(1.0 - eta) / hs, -(1.0 - xi) / ht),
                        (xi * (1.0 - eta), (1.0 - eta) / hs, -xi / ht),
                        ((1.0 - xi) * eta, -eta / hs, (1.0 - xi) / ht),
                        (xi * eta, eta / hs, xi / ht),
                    ];
                    let mut v = [Vector3::zeros(); 8];
                    for (ai, &(_, ds, dt)) in sh.iter().enumerate() {
                        let g = [cs * ds - sn * dt, sn * ds + cs * dt];
                        for k in 0..2 {
                            let mut em = Mat2::zeros();
                            em[(k, 0)] = g[0];
                            em[(k, 1)] = g[1];
                            v[2 * ai + k] = voigt(&em);
                        }
                    }
                    let mv: Vec<Vector3<f64>> = v.iter().map(|x| m * x).collect();
                    for p in 0..8 {
                        let dp = 2 * nodes[p / 2] + p % 2;
                        for q2 in 0..=p {
                            let dq = 2 * nodes[q2 / 2] + q2 % 2;
                            let val = w * v[q2].dot(&mv[p]);
                            if p == q2 {
                                a.add(dp, dq, val);
                            } else if dp == dq {
                                a.add(dp, dq, 2.0 * val);
                            } else {
                                a.add(dp, dq, val);
                            }
                        }
                        for mm in 0..2 {
                            b[mm][dp] += w * v[p].dot(&mvk[mm]);
                        }
                    }
                    for m1 in 0..2 {
                        for m2 in 0..2 {
                            e[(m1, m2)] += 0.5 * w * vk[m1].dot(&mvk[m2]);
                        }
                    }
                }
            }
        }
    }
    Assembled { a, b, e }
}

/// Solution of the discrete minimization for both unit directions.
pub struct FormSolution {
    /// `psi(xi) = xi^T q xi`.
    pub q: Matrix2<f64>,
    /// Nodal corrections `u` for `xi = e1` and `xi = e2`.
    pub u: [Vec<f64>; 2],
    pub residual: f64,
}

/// Minimizes over `u` with node `(0, 0)` pinned to remove translations.
pub fn solve_form(mesh: &LogPolarMesh, c: &ElasticTensor) -> Result<FormSolution> {
    let Assembled { mut a, mut b, e } = assemble(mesh, c);
    let pinned = [2 * mesh.node(0, 0), 2 * mesh.node(0, 0) + 1];
    for &p in &pinned {
        a.pin(p);
        b[0][p] = 0.0;
        b[1][p] = 0.0;
    }
    let a_copy = a.clone();
    a.factor()?;
    let mut u = [a.solve(&b[0]), a.solve(&b[1])];
    for col in u.iter_mut() {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
    let mut q = e;
    for m1 in 0..2 {
        for m2 in 0..2 {
            // xi^T B^T A^{-1} B xi with u = -A^{-1} B e_m
            let s: f64 = b[m1].iter().zip(&u[m2]).map(|(x, y)| x * y).sum();
            q[(m1, m2)] += 0.5 * s;
        }
    }
    q = (q + q.transpose()) * 0.5;
    let mut residual: f64 = 0.0;
    for m1 in 0..2 {
        let au = a_copy.mul(&u[m1]);
        let num: f64 = au.iter().zip(&b[m1]).map(|(x, y)| (x + y) * (x + y)).sum::<f64>().sqrt();
        let den: f64 = b[m1].iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        residual = residual.max(num / den);
    }
    Ok(FormSolution { q, u, residual })
}
