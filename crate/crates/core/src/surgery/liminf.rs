//! Lower bound on the energy near the dislocations by slicing ball
//! constructions into windows.
//!
//! For each cluster `A^j` (a component of `union_i B_{eps^gamma}(x_i)` away
//! from the outer boundary) the cores are grown until a ball reaches the
//! boundary of the cluster at `s_j`. The interval `[0, s_j]` is cut into
//! `floor(N |log eps|^(1 - delta))` windows of equal length `dt`. In a window
//! where no parent of a final ball merges, every parent annulus
//! `B_m(t_{l+1}) \ B_m(t_l)` has ratio `c^dt` and carries the circulation
//! `mu(B_m(t_l))`, so its energy is at least the cell energy `psi_{c^dt}`.
//! The annuli are pairwise disjoint, hence the sum is a lower bound for the
//! elastic energy on the cluster.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annulus::{psi_form, Discretization};
use crate::ball::{prepare_disjoint_cover, run_construction, Ball, ContactRegion, StopRule};
use crate::error::{Error, Result};
use crate::fields::{annulus_energy, StrainField};
use crate::geom::Vec2;
use crate::model::{DislocationMeasure, Domain, ElasticTensor};
use crate::relax::Relaxation;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiminfParams {
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
    pub delta: f64,
    /// Window refinement `N`.
    pub n_windows: usize,
    pub c: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterBound {
    pub atoms: Vec<usize>,
    pub mass: Vec2,
    pub stop_time: f64,
    pub windows: usize,
    pub window_length: f64,
    /// Quiet (ball, window) pairs used.
    pub quiet_pairs: usize,
    /// Sum of cell energies over the quiet windows.
    pub certified: f64,
    /// Quadrature of the strain energy over the same annuli.
    pub measured: Option<f64>,
    pub phi_mass: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiminfBound {
    /// Sum of the certified cluster bounds.
    pub value: f64,
    /// `(alpha - gamma - eta - delta_tilde) |log eps| sum_j phi(mu(A^j))`.
    pub phi_bound: f64,
    pub delta_tilde: f64,
    pub factor: f64,
    pub clusters: Vec<ClusterBound>,
    /// Clusters skipped because they reach the outer boundary.
    pub boundary_clusters: usize,
}

/// Atom index sets of the components of `union_i B_r(x_i)`, each flagged
/// when it meets the boundary of `omega`.
pub fn core_clusters(mu: &DislocationMeasure, omega: &Domain, r: f64) -> Vec<(Vec<usize>, bool)> {
    let n = mu.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut k: usize) -> usize {
        while p[k] != k {
            p[k] = p[p[k]];
            k = p[k];
        }
        k
    }
    for i in 0..n {
        for j in i + 1..n {
            if (mu.atoms[i].x - mu.atoms[j].x).norm() < 2.0 * r {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..n {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(k);
    }
    groups
        .into_values()
        .map(|g| {
            let touches = g.iter().any(|&k| omega.dist_to_boundary(mu.atoms[k].x) <= r);
            (g, touches)
        })
        .collect()
}

/// Cell energy of ratio `ratio`, corrected towards a lower value by the
/// change under refinement.
fn cell_form(ratio: f64, c: &ElasticTensor, disc: &Discretization) -> Result<[[f64; 2]; 2]> {
    let q = psi_form(1.0, ratio, c, disc)?;
    let qr = psi_form(1.0, ratio, c, &disc.refined())?;
    // conforming elements overestimate the minimum; extrapolate the
    // quadratic convergence and keep the smaller value
    let ext = qr - (q - qr) / 3.0;
    let pick = if ext.trace() < qr.trace() { ext } else { qr };
    Ok([[pick[(0, 0)], pick[(0, 1)]], [pick[(1, 0)], pick[(1, 1)]]])
}

fn quad_value(q: &[[f64; 2]; 2], xi: Vec2) -> f64 {
    (xi.x * (q[0][0] * xi.x + q[0][1] * xi.y) + xi.y * (q[1][0] * xi.x + q[1][1] * xi.y)).max(0.0)
}

#[allow(clippy::too_many_arguments)]
pub fn liminf_lower_bound(
    mu: &DislocationMeasure,
    beta: &StrainField,
    omega: &Domain,
    params: &LiminfParams,
    c: &ElasticTensor,
    relax: &Relaxation,
    disc: &Discretization,
    measure: bool,
) -> Result<LiminfBound> {
    let LiminfParams { alpha, gamma, eta, delta, n_windows, c: cexp, eps } = *params;
    if !(1.0 > alpha && alpha > gamma && gamma > 0.0) || !(eta >= 0.0) || !(delta >= 0.0) {
        return Err(Error::pre("need 1 > alpha > gamma > 0 and eta, delta >= 0"));
    }
    if !(cexp > 1.0) || n_windows == 0 || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::pre("need c > 1, N >= 1 and eps in (0, 1)"));
    }
    let (lo, hi) = relax.unit_range(720);
    let delta_tilde = delta * hi / lo;
    let factor = alpha - gamma - eta - delta_tilde;
    if !(factor > 0.0) {
        return Err(Error::pre("alpha - gamma - eta - delta_tilde must be positive"));
    }
    let le = eps.ln().abs();
    let reach = eps.powf(gamma);
    let clusters = core_clusters(mu, omega, reach);
    let boundary_clusters = clusters.iter().filter(|c| c.1).count();
    let inner: Vec<Vec<usize>> = clusters.into_iter().filter(|c| !c.1).map(|c| c.0).collect();
    let slices = n_windows as f64 * le.powf(1.0 - delta);
    let windows = slices.floor() as usize;

    let bounds: Vec<Result<ClusterBound>> = inner
        .par_iter()
        .map(|atoms| {
            let sub = DislocationMeasure::new(atoms.iter().map(|&k| mu.atoms[k]).collect());
            let mass = sub.total_mass();
            let phi_mass = if mass == Vec2::zeros() { 0.0 } else { relax.phi(mass) };
            let cores: Vec<Ball> =
                sub.atoms.iter().enumerate().map(|(k, a)| Ball::new(k, a.x, eps)).collect();
            let start = prepare_disjoint_cover(&cores)?;
            let region = ContactRegion::DiscUnion { centers: sub.positions(), radius: reach };
            let trace = run_construction(&start, cexp, &StopRule::at_contact(region))?;
            let s = trace.stop_time;
            let mut out = ClusterBound {
                atoms: atoms.clone(),
                mass,
                stop_time: s,
                windows,
                window_length: 0.0,
                quiet_pairs: 0,
                certified: 0.0,
                measured: measure.then_some(0.0),
                phi_mass,
            };
            if windows == 0 || !(s > 0.0) {
                return Ok(out);
            }
            let dt = s / slices;
            out.window_length = dt;
            let form = cell_form(cexp.powf(dt), c, disc)?;
            let leaf = trace.leaf_masses(&sub);
            let finals = trace.alive_at(s);
            let mut measured = 0.0;
            for &i in &finals {
                let merges = trace.lineage_merge_times(i);
                for l in 0..windows {
                    let (ta, tb) = (l as f64 * dt, (l + 1) as f64 * dt);
                    if merges.iter().any(|&m| m > ta && m <= tb) {
                        continue;
                    }
                    out.quiet_pairs += 1;
                    for m in trace.parents(i, s, ta)? {
                        let nu = trace.leaves(m).into_iter().fold(Vec2::zeros(), |acc, k| acc + leaf[k]);
                        out.certified += quad_value(&form, nu);
                        if measure && nu != Vec2::zeros() {
                            let ctr = trace.nodes[m].center;
                            measured += annulus_energy(
                                ctr,
                                trace.radius(m, ta),
                                trace.radius(m, tb),
                                128,
                                c,
                                |x| beta.eval(x),
                            );
                        }
                    }
                }
            }
            if measure {
                out.measured = Some(measured);
            }
            Ok(out)
        })
        .collect();
    let mut clusters = Vec::with_capacity(bounds.len());
    for b in bounds {
        clusters.push(b?);
    }
    let value = clusters.iter().map(|c| c.certified).sum();
    let phi_bound = factor * le * clusters.iter().map(|c| c.phi_mass).sum::<f64>();
    Ok(LiminfBound { value, phi_bound, delta_tilde, factor, clusters, boundary_clusters })
}
