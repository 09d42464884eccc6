//! Harmonic extension of a curl-free field from an annulus into the disc.
//!
//! Given `F = grad u` on `B_R \ B_r` with zero circulation, `u` is single
//! valued. We subtract the mean skew part `W`, recover the trace of `u - W x`
//! on a matching circle from the tangential component of `F - W`, and extend
//! it harmonically mode by mode. The result agrees with `F` in gradient up to
//! `W` on the matching circle and has least Dirichlet energy inside.

use nalgebra::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{annulus_integral, annulus_l2, HarmonicExtension};
use crate::geom::{self, Mat2, Vec2};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExtensionOptions {
    /// Radius of the matching circle; the geometric mean of the annulus radii
    /// when absent.
    pub match_radius: Option<f64>,
    pub samples: usize,
    pub max_samples: usize,
    /// Accepted relative energy in the upper quarter of the resolved modes.
    pub tail_tol: f64,
    /// Accepted circulation relative to `max(1, int |F t|)` on the circle.
    pub circulation_tol: f64,
    /// Angular points for the annulus integrals.
    pub n_theta: usize,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        ExtensionOptions {
            match_radius: None,
            samples: 256,
            max_samples: 4096,
            tail_tol: 1e-10,
            circulation_tol: 1e-8,
            n_theta: 256,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtensionResult {
    pub extension: HarmonicExtension,
    /// `int_{B_rho} |grad v|^2`.
    pub interior_energy: f64,
    /// `int_annulus |F - W|^2`.
    pub deviation: f64,
    /// `int_annulus |sym F|^2`.
    pub sym_energy: f64,
    /// `interior_energy / deviation`, zero when the deviation vanishes.
    pub c_ext: f64,
    /// `interior_energy / sym_energy`, zero when the symmetric part vanishes.
    pub c_sym: f64,
    pub circulation: Vec2,
    pub samples: usize,
    /// Relative tail energy at the final sample count.
    pub tail: f64,
}

/// Extends `f`, given on `B_{r_out}(center) \ B_{r_in}(center)`, to a
/// harmonic gradient plus constant skew matrix inside the matching circle.
pub fn harmonic_gradient_extension(
    f: &(dyn Fn(Vec2) -> Mat2 + Sync),
    center: Vec2,
    r_in: f64,
    r_out: f64,
    opts: &ExtensionOptions,
) -> Result<ExtensionResult> {
    harmonic_gradient_extension_with_breaks(f, center, r_in, r_out, opts, &[])
}

/// As [`harmonic_gradient_extension`] for a field that may jump across the
/// circles `breaks`. When the matching circle crosses one of them, the
/// boundary data are integrated with Gauss panels between the crossings
/// instead of the uniform rule.
pub fn harmonic_gradient_extension_with_breaks(
    f: &(dyn Fn(Vec2) -> Mat2 + Sync),
    center: Vec2,
    r_in: f64,
    r_out: f64,
    opts: &ExtensionOptions,
    breaks: &[(Vec2, f64)],
) -> Result<ExtensionResult> {
    if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
        return Err(Error::pre("extension annulus needs 0 < r_in < r_out"));
    }
    let rho = opts.match_radius.unwrap_or((r_in * r_out).sqrt());
    if !(rho >= r_in && rho <= r_out) {
        return Err(Error::pre("matching circle must lie in the annulus"));
    }
    if opts.samples < 8 || opts.max_samples < opts.samples {
        return Err(Error::pre("extension sampling too coarse"));
    }
    let area = std::f64::consts::PI * (r_out * r_out - r_in * r_in);
    let skew_int =
        annulus_integral(center, r_in, r_out, 4, 8, opts.n_theta, |x| geom::skew_coord(&f(x)));
    let w = skew_int / area;
    let wm = geom::skew_from(w);

    let mut m = opts.samples;
    let cuts = geom::circle_crossings(center, rho, breaks);
    let piecewise = if cuts.is_empty() {
        None
    } else {
        m = (opts.max_samples / 4).max(opts.samples);
        Some(piecewise_coefficients(f, center, rho, wm, &cuts, m / 2))
    };
    let mut planner = FftPlanner::<f64>::new();
    // the circulation is judged at the final resolution only: singular
    // points close to the circle slow down the uniform rule
    let (coeffs, circulation, mass, tail) = loop {
        if let Some((out, circ, mass, tail)) = &piecewise {
            break (out.clone(), *circ, *mass, *tail);
        }
        let dt = 2.0 * std::f64::consts::PI / m as f64;
        let mut h = [vec![Complex::new(0.0, 0.0); m], vec![Complex::new(0.0, 0.0); m]];
        let mut circ = Vec2::zeros();
        let mut mass = 0.0;
        for j in 0..m {
            let th = j as f64 * dt;
            let (sn, cs) = th.sin_cos();
            let x = center + Vec2::new(cs, sn) * rho;
            let t = Vec2::new(-sn, cs) * rho;
            let g = f(x);
            let gt = g * t;
            circ += gt * dt;
            mass += gt.norm() * dt;
            let ht = (g - wm) * t;
            h[0][j] = Complex::new(ht.x, 0.0);
            h[1][j] = Complex::new(ht.y, 0.0);
        }
        let fft = planner.plan_fft_forward(m);
        let half = m / 2;
        let mut out: [Vec<Complex<f64>>; 2] = [Vec::new(), Vec::new()];
        let mut total = 0.0;
        let mut upper = 0.0;
        for k in 0..2 {
            fft.process(&mut h[k]);
            // d_m = hat h_m / M, c_m = d_m / (i m), a_m = 2 c_m
            for mm in 1..half {
                let d = h[k][mm] / m as f64;
                let a = d / Complex::new(0.0, mm as f64) * 2.0;
                let e = mm as f64 * a.norm_sqr();
                total += e;
                if mm >= half / 2 {
                    upper += e;
                }
                out[k].push(a);
            }
        }
        let tail = if total > 0.0 { (upper / total).sqrt() } else { 0.0 };
        if tail <= opts.tail_tol || 2 * m > opts.max_samples {
            break (out, circ, mass, tail);
        }
        m *= 2;
    };
    check_circulation(circulation, mass, opts)?;
    let mut coeffs = coeffs;
    let scale = coeffs.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
    for c in coeffs.iter_mut() {
        let keep = c.iter().rposition(|z| z.norm() > 1e-16 * scale).map_or(0, |p| p + 1);
        c.truncate(keep);
    }
    let extension = HarmonicExtension { center, rho, u0: [0.0, 0.0], coeffs, w };
    let interior_energy = extension.dirichlet_energy();
    let deviation = annulus_l2(center, r_in, r_out, opts.n_theta, |x| f(x) - wm);
    let sym_energy = annulus_l2(center, r_in, r_out, opts.n_theta, |x| geom::sym(&f(x)));
    // quadrature noise of a few ulps must not produce huge ratios
    let floor = 1e-14 * (interior_energy + deviation + sym_energy);
    let ratio = |a: f64, b: f64| if b > floor && b > 0.0 { a / b } else { 0.0 };
    Ok(ExtensionResult {
        c_ext: ratio(interior_energy, deviation),
        c_sym: ratio(interior_energy, sym_energy),
        extension,
        interior_energy,
        deviation,
        sym_energy,
        circulation,
        samples: m,
        tail,
    })
}

fn check_circulation(circ: Vec2, mass: f64, opts: &ExtensionOptions) -> Result<()> {
    if circ.norm() > opts.circulation_tol * mass.max(1.0) {
        return Err(Error::pre(format!(
            "field has circulation ({:.3e}, {:.3e}) around the annulus; no extension exists",
            circ.x, circ.y
        )));
    }
    Ok(())
}

/// Fourier data of the tangential trace by Gauss panels between the cuts:
/// coefficients `a_m` for `m = 1..modes`, circulation, trace mass and tail.
fn piecewise_coefficients(
    f: &(dyn Fn(Vec2) -> Mat2 + Sync),
    center: Vec2,
    rho: f64,
    wm: Mat2,
    cuts: &[f64],
    modes: usize,
) -> ([Vec<Complex<f64>>; 2], Vec2, f64, f64) {
    let tau = 2.0 * std::f64::consts::PI;
    let max_panel = tau / 64.0;
    let (gx, gw) = geom::gauss_legendre(16);
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    for k in 0..cuts.len() {
        let a = cuts[k];
        let b = if k + 1 < cuts.len() { cuts[k + 1] } else { cuts[0] + tau };
        let panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
            }
        }
    }
    let mut circ = Vec2::zeros();
    let mut mass = 0.0;
    let samples: Vec<(f64, f64, Vec2)> = nodes
        .iter()
        .map(|&(th, w)| {
            let (sn, cs) = th.sin_cos();
            let x = center + Vec2::new(cs, sn) * rho;
            let t = Vec2::new(-sn, cs) * rho;
            let g = f(x);
            let gt = g * t;
            circ += gt * w;
            mass += gt.norm() * w;
            (th, w, (g - wm) * t)
        })
        .collect();
    let mut out: [Vec<Complex<f64>>; 2] = [Vec::with_capacity(modes), Vec::with_capacity(modes)];
    let (mut total, mut upper) = (0.0, 0.0);
    for mm in 1..modes {
        let mut d = [Complex::new(0.0, 0.0); 2];
        for &(th, w, h) in &samples {
            let e = Complex::from_polar(w / tau, -(mm as f64) * th);
            d[0] += e * h.x;
            d[1] += e * h.y;
        }
        for k in 0..2 {
            let a = d[k] / Complex::new(0.0, mm as f64) * 2.0;
            let e = mm as f64 * a.norm_sqr();
            total += e;
            if 2 * mm >= modes {
                upper += e;
            }
            out[k].push(a);
        }
    }
    let tail = if total > 0.0 { (upper / total).sqrt() } else { 0.0 };
    (out, circ, mass, tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_gradient() {
        let g = Mat2::new(1.0, 0.7, -0.3, 2.0);
        let f = move |_x: Vec2| g;
        let c = Vec2::new(0.3, -0.2);
        let res = harmonic_gradient_extension(&f, c, 0.5, 1.0, &ExtensionOptions::default()).unwrap();
        let ext = &res.extension;
        assert!((ext.w - geom::skew_coord(&g)).abs() < 1e-12);
        let inside = ext.strain(c + Vec2::new(0.1, 0.05));
        assert!((inside - g).norm() < 1e-10);
        let sym_density = geom::sym(&g).norm_squared();
        let expect = sym_density * std::f64::consts::PI * 0.5;
        assert!((res.interior_energy - expect).abs() < 1e-9 * expect);
    }
}
