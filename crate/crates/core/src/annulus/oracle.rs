//! Reduced radial problem for isotropic tensors.
//!
//! For isotropic `C` the correction decouples by angular mode and the
//! response to `xi = e1` is a single mode `u_r = a(s) sin(theta)`,
//! `u_theta = b(s) cos(theta)` with `s = log r`. After integrating in angle
//! the energy per unit `s` is
//!
//! `pi [ mu (a'^2 + (a - b + q)^2 + 1/2 (a - b + b' - q)^2) + lambda/2 (a' + a - b + q)^2 ]`
//!
//! with `q = 1/2pi`. This module minimizes that functional with piecewise
//! linear elements in `s`, independently of the two-dimensional solver.

use super::banded::BandedSpd;
use crate::error::{Error, Result};

const Q: f64 = 0.5 * std::f64::consts::FRAC_1_PI;

/// Minimal energy on `B_1 \ B_delta` for `|xi| = 1` and isotropic `C`.
pub fn radial_mode_value(lambda: f64, mu: f64, delta: f64, per_unit: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::pre("delta must lie in (0, 1)"));
    }
    let len = -delta.ln();
    let ne = ((len * per_unit as f64).ceil() as usize).max(4);
    let h = len / ne as f64;
    let n = 2 * (ne + 1);
    let mut a = BandedSpd::zeros(n, 3);
    let mut rhs = vec![0.0; n];
    let mut constant = 0.0;
    let gp = crate::geom::gauss_on(0.0, 1.0, 2);
    let pi = std::f64::consts::PI;
    for el in 0..ne {
        let dofs = [2 * el, 2 * el + 1, 2 * el + 2, 2 * el + 3]; // a_l, b_l, a_r, b_r
        for &(t, w) in &gp {
            let w = w * h * pi;
            // each residual is linear: r = g . u + r0
            let (nl, nr) = (1.0 - t, t);
            let (dl, dr) = (-1.0 / h, 1.0 / h);
            let terms: [([f64; 4], f64, f64); 4] = [
                ([dl, 0.0, dr, 0.0], 0.0, mu),
                ([nl, -nl, nr, -nr], Q, mu),
                ([nl, -nl + dl, nr, -nr + dr], -Q, 0.5 * mu),
                ([nl + dl, -nl, nr + dr, -nr], Q, 0.5 * lambda),
            ];
            for (g, r0, coef) in terms {
                let cw = coef * w;
                for p in 0..4 {
                    for q in 0..=p {
                        let v = 2.0 * cw * g[p] * g[q];
                        if dofs[p] == dofs[q] && p != q {
                            a.add(dofs[p], dofs[q], 2.0 * v);
                        } else {
                            a.add(dofs[p], dofs[q], v);
                        }
                    }
                    rhs[dofs[p]] += 2.0 * cw * g[p] * r0;
                }
                constant += cw * r0 * r0;
            }
        }
    }
    // energy = 1/2 u^T A u + rhs^T u + constant; pin b_0 to remove the translation
    a.pin(1);
    rhs[1] = 0.0;
    let a0 = a.clone();
    a.factor()?;
    let u: Vec<f64> = a.solve(&rhs).into_iter().map(|x| -x).collect();
    let au = a0.mul(&u);
    let quad: f64 = u.iter().zip(&au).map(|(x, y)| x * y).sum();
    let lin: f64 = u.iter().zip(&rhs).map(|(x, y)| x * y).sum();
    Ok(0.5 * quad + lin + constant)
}

/// Closed-form per-unit-`log` slope of the reduced problem,
/// `mu (lambda + mu) / (2 pi (lambda + 2 mu))` for `|xi| = 1`.
pub fn isotropic_slope(lambda: f64, mu: f64) -> f64 {
    mu * (lambda + mu) / (2.0 * std::f64::consts::PI * (lambda + 2.0 * mu))
}
