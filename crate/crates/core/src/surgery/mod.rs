//! Strain surgery: trading the circulation condition around the cores for a
//! measure-valued curl.
//!
//! [`run_surgery`] runs three ball constructions. The first grows the cores
//! and fixes the scale, the second finds dipolar clusters (balls whose
//! starting parents all carry zero Burgers vector) and replaces the strain
//! inside them by a harmonic gradient, and the third grows the surviving
//! balls to a quiet step where each singular core is replaced by a smooth
//! field whose curl lives on one circle. Every choice the existence proof
//! leaves open is made by minimizing measured annulus energies.
//!
//! [`run_dichotomy`] checks the good-ball/small-mass alternative and
//! [`liminf_lower_bound`] converts quiet windows into cell energies.

mod dichotomy;
mod liminf;

pub use dichotomy::{
    dichotomy_from_surgery, run_dichotomy, DichotomyParams, DichotomyReport, GoodBall,
};
pub use liminf::{core_clusters, liminf_lower_bound, ClusterBound, LiminfBound, LiminfParams};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annulus::{harmonic_gradient_extension_with_breaks, ExtensionOptions};
use crate::ball::{
    prepare_disjoint_cover, run_construction, Ball, BallClass, BallConstructionTrace,
    ContactRegion, StopRule,
};
use crate::error::{Error, Result};
use crate::fields::{
    annulus_energy, boundary_mass_k, circle_loop, circulation_with, field_geometry, integrate, KField, Outer,
    Patch, QuadOptions, StrainField,
};
use crate::geom::{self, Mat2, Vec2};
use crate::model::{Atom, DislocationMeasure, Domain, ElasticTensor};

/// Region on which the surgery acts.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Polygon { domain: Domain },
    Disc { center: Vec2, radius: f64 },
}

impl Region {
    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Region::Polygon { domain } => domain.contains(p),
            Region::Disc { center, radius } => (p - center).norm() <= *radius,
        }
    }

    /// Unsigned distance to the boundary.
    pub fn dist_to_boundary(&self, p: Vec2) -> f64 {
        match self {
            Region::Polygon { domain } => domain.dist_to_boundary(p),
            Region::Disc { center, radius } => (radius - (p - center).norm()).abs(),
        }
    }

    pub fn outer(&self) -> Outer<'_> {
        match self {
            Region::Polygon { domain } => Outer::Polygon(domain),
            Region::Disc { center, radius } => Outer::Disc { center: *center, radius: *radius },
        }
    }

    pub fn contact(&self) -> ContactRegion {
        match self {
            Region::Polygon { domain } => ContactRegion::Polygon(domain.clone()),
            Region::Disc { center, radius } => ContactRegion::Disc { center: *center, radius: *radius },
        }
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        match self {
            Region::Polygon { domain } => domain.bbox(),
            Region::Disc { center, radius } => {
                (center - Vec2::repeat(*radius), center + Vec2::repeat(*radius))
            }
        }
    }

    /// Clockwise circulation of `f` along the boundary; `spacing` bounds the
    /// length of the quadrature panels.
    pub fn boundary_circulation(
        &self,
        f: &(dyn Fn(Vec2) -> Mat2 + Sync),
        spacing: f64,
        breaks: &[(Vec2, f64)],
    ) -> Result<Vec2> {
        match self {
            Region::Polygon { domain } => {
                let v = domain.vertices();
                let mut lp = Vec::new();
                for k in 0..v.len() {
                    let (a, b) = (v[k], v[(k + 1) % v.len()]);
                    let pieces = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
                    for p in 0..pieces {
                        lp.push(a + (b - a) * (p as f64 / pieces as f64));
                    }
                }
                circulation_with(f, &[], 0.0, &lp, 16)
            }
            Region::Disc { center, radius } => {
                Ok(circle_circulation(f, *center, *radius, breaks, spacing / radius))
            }
        }
    }
}

/// Clockwise circulation of `f` around `B_r(center)` with Gauss panels
/// split at the crossings with `breaks` and no longer than `max_angle`.
pub fn circle_circulation(
    f: &(dyn Fn(Vec2) -> Mat2 + Sync),
    center: Vec2,
    r: f64,
    breaks: &[(Vec2, f64)],
    max_angle: f64,
) -> Vec2 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut cuts = geom::circle_crossings(center, r, breaks);
    if cuts.is_empty() {
        cuts.push(0.0);
    }
    let max_angle = max_angle.clamp(1e-6, tau / 64.0);
    let (gx, gw) = geom::gauss_legendre(16);
    let mut total = Vec2::zeros();
    for k in 0..cuts.len() {
        let a = cuts[k];
        let b = if k + 1 < cuts.len() { cuts[k + 1] } else { cuts[0] + tau };
        let panels = ((b - a) / max_angle).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                let th = lo + 0.5 * h * (x + 1.0);
                let (sn, cs) = th.sin_cos();
                let t = Vec2::new(-sn, cs) * r;
                total += f(center + Vec2::new(cs, sn) * r) * t * (0.5 * h * w);
            }
        }
    }
    -total
}

fn default_c() -> f64 {
    1.1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurgeryParams {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub delta: f64,
    /// Energy bound `K` in `F_eps <= K |log eps|^-delta`.
    pub k_bound: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Expansion factor of the third construction; derived from the measured
    /// ball count when absent.
    #[serde(default)]
    pub c1: Option<f64>,
    pub eps: f64,
    #[serde(default)]
    pub options: SurgeryOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SurgeryOptions {
    /// Smallest quadrature cell; `eps / 4` when absent.
    pub quad_h_min: Option<f64>,
    pub quad_h_max: Option<f64>,
    /// Angular points for annulus energies used to pick quiet steps.
    pub selection_n_theta: usize,
    pub extension: ExtensionOptions,
    pub locality_samples: usize,
    pub circulation_tol: f64,
    /// Refuse inputs whose measured energy exceeds `K |log eps|^-delta`.
    pub enforce_energy_bound: bool,
}

impl Default for SurgeryOptions {
    fn default() -> Self {
        SurgeryOptions {
            quad_h_min: None,
            quad_h_max: None,
            selection_n_theta: 64,
            extension: ExtensionOptions::default(),
            locality_samples: 2000,
            circulation_tol: 1e-6,
            enforce_energy_bound: true,
        }
    }
}

impl SurgeryParams {
    pub fn new(alpha: f64, gamma: f64, delta: f64, k_bound: f64, eps: f64) -> Self {
        SurgeryParams {
            alpha,
            gamma,
            delta,
            k_bound,
            c: default_c(),
            c1: None,
            eps,
            options: SurgeryOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.0 > self.alpha && self.alpha > self.gamma && self.gamma > 0.0) {
            return Err(Error::pre("exponents must satisfy 1 > alpha > gamma > 0"));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::pre("delta must lie in [0, 1)"));
        }
        if !(self.k_bound > 0.0) {
            return Err(Error::pre("energy bound K must be positive"));
        }
        if !(self.c > 1.0) || self.c1.is_some_and(|c1| !(c1 > 1.0)) {
            return Err(Error::pre("expansion factors must exceed 1"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::pre("eps must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        (1.0 - self.alpha) / 3.0
    }

    pub fn log_eps(&self) -> f64 {
        self.eps.ln().abs()
    }

    /// `ceil((sigma / 2) |log eps| / log c)`.
    pub fn s1(&self) -> f64 {
        (0.5 * self.sigma() * self.log_eps() / self.c.ln()).ceil()
    }

    fn quad(&self) -> QuadOptions {
        let mut q = QuadOptions::new(self.options.quad_h_min.unwrap_or(self.eps / 4.0));
        q.h_max = self.options.quad_h_max;
        q
    }
}

/// Curl of the modified strain on one circle: the density `K_xi . tau`
/// with total variation `|xi|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurlCircle {
    pub center: Vec2,
    pub radius: f64,
    pub xi: Vec2,
}

impl CurlCircle {
    pub fn density(&self) -> KField {
        KField::new(self.xi, self.center)
    }

    pub fn mass(&self) -> f64 {
        self.xi.norm()
    }
}

/// A dipolar ball removed in the second step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeletedBall {
    pub ball: Ball,
    pub quiet_step: i64,
    pub parents: usize,
    pub annulus_energy: f64,
    pub atoms: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepSummary {
    pub sigma: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: Option<f64>,
    pub c1: Option<f64>,
    /// Sum of radii at `s1` and the budget `eps^(alpha + 2 sigma)`.
    pub step1_sum_radii: f64,
    pub step1_budget: f64,
    pub few: usize,
    pub many: usize,
    pub a1: usize,
    pub a2: usize,
    pub a3: usize,
    /// `(#A1 + #A2) / |log eps|^(1 - delta)`.
    pub count_constant: f64,
    pub deleted: Vec<DeletedBall>,
    pub step3_quiet_step: Option<i64>,
    pub step3_annulus_energy: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiameterCheck {
    pub max_diameter: f64,
    pub bound: f64,
    pub meets_support: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountCheck {
    pub count: usize,
    /// `count / |log eps|^(1 - delta)`.
    pub constant: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalityCheck {
    pub samples: usize,
    pub max_deviation: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurlSupportCheck {
    /// Largest circulation around loops that enclose no curl.
    pub max_free_circulation: f64,
    /// Largest `|circulation around D_i - xi_i|`.
    pub max_ball_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentCheck {
    pub mu: Vec2,
    /// Sum of the measured circulations around the balls.
    pub curl_sum: Vec2,
    /// Circulation of the modified strain along the component boundary.
    pub boundary_circulation: Vec2,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConservationCheck {
    pub components: Vec<ComponentCheck>,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariationCheck {
    /// `|curl beta_bar|(A)` from the circle densities.
    pub total_variation: f64,
    pub mu_variation: f64,
    /// `total_variation / |log eps|^(1 - delta)`.
    pub constant: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyCheck {
    /// `int_A 1/2 C beta_bar : beta_bar`.
    pub modified: f64,
    /// `int_{A_eps} 1/2 C beta : beta`.
    pub elastic: f64,
    pub core: f64,
    /// Measured `F_eps(mu, beta, A)`.
    pub f_eps: f64,
    /// `modified / (elastic + core)`.
    pub factor: f64,
    /// `(factor - 1) |log eps|`.
    pub constant: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub diameter: DiameterCheck,
    pub count: CountCheck,
    pub locality: LocalityCheck,
    pub curl_support: CurlSupportCheck,
    pub conservation: ConservationCheck,
    pub variation: VariationCheck,
    pub energy: EnergyCheck,
}

impl Diagnostics {
    /// The checks with an absolute pass criterion.
    pub fn pass(&self) -> bool {
        self.diameter.pass
            && self.locality.pass
            && self.curl_support.pass
            && self.conservation.pass
            && self.variation.pass
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurgeryResult {
    pub field: StrainField,
    /// The balls `D_i`.
    pub balls: Vec<Ball>,
    pub curl: Vec<CurlCircle>,
    /// `mu` without the atoms of deleted dipolar balls.
    pub reduced: DislocationMeasure,
    pub steps: StepSummary,
    pub diagnostics: Diagnostics,
    /// The ball constructions of the three steps that ran.
    pub traces: Vec<BallConstructionTrace>,
}

/// Index of the ball alive at `t` that contains `x`.
fn owner_at(trace: &BallConstructionTrace, alive: &[usize], t: f64, x: Vec2) -> Option<usize> {
    alive
        .iter()
        .map(|&k| (k, (x - trace.nodes[k].center).norm() / trace.radius(k, t)))
        .filter(|&(_, q)| q <= 1.0 + 1e-9)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

fn mass_below(trace: &BallConstructionTrace, id: usize, leaf: &[Vec2]) -> Vec2 {
    trace.leaves(id).into_iter().fold(Vec2::zeros(), |s, k| s + leaf[k])
}

fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// A matching radius in `(r_in, r_out)` whose circle avoids the given discs,
/// as close to the geometric mean as possible.
fn match_radius(center: Vec2, r_in: f64, r_out: f64, discs: &[(Vec2, f64)]) -> f64 {
    let clear = |rho: f64| {
        discs.iter().all(|&(c, r)| {
            let d = (c - center).norm();
            (rho - d).abs() >= r * 1.02
        })
    };
    let mean = (r_in * r_out).sqrt();
    if clear(mean) {
        return mean;
    }
    let (lo, hi) = (r_in.ln(), r_out.ln());
    (1..64)
        .map(|k| (lo + (hi - lo) * k as f64 / 64.0).exp())
        .filter(|&r| clear(r))
        .min_by(|a, b| (a.ln() - mean.ln()).abs().total_cmp(&(b.ln() - mean.ln()).abs()))
        .unwrap_or(mean)
}

fn energy_over(
    field: &StrainField,
    region: &Region,
    cores: &[Vec2],
    eps: f64,
    c: &ElasticTensor,
    q: &QuadOptions,
) -> Result<f64> {
    if field.terms.is_empty()
        && field.levels.is_empty()
        && field.overlays.is_empty()
        && field.background == Mat2::zeros()
    {
        return Ok(0.0);
    }
    let geo = field_geometry(field, region.outer(), cores, eps);
    integrate(&geo, q, |x| if region.contains(x) { c.density(&field.eval(x)) } else { 0.0 })
}

/// The three-step surgery on `beta`, which must generate `mu` on `region`
/// with cores of radius `params.eps`.
pub fn run_surgery(
    mu: &DislocationMeasure,
    beta: &StrainField,
    region: &Region,
    params: &SurgeryParams,
    c: &ElasticTensor,
) -> Result<SurgeryResult> {
    params.validate()?;
    let eps = params.eps;
    let le = params.log_eps();
    let opts = &params.options;
    let quad = params.quad();
    let dil = le.powf(1.0 - params.delta);

    let inside: Vec<Atom> = mu.atoms.iter().copied().filter(|a| region.contains(a.x)).collect();
    if inside.len() != mu.atoms.len() {
        return Err(Error::pre("every atom must lie in the region"));
    }
    let reach = eps.powf(params.gamma);
    if let Some(a) = mu.atoms.iter().find(|a| region.dist_to_boundary(a.x) < reach) {
        return Err(Error::pre(format!(
            "atom at ({}, {}) is closer than eps^gamma = {reach:.3e} to the boundary",
            a.x.x, a.x.y
        )));
    }
    let positions = mu.positions();
    let elastic = energy_over(beta, region, &positions, eps, c, &quad)?;
    let core = mu.total_variation();
    let f_eps = (elastic + core) / (le * le);
    if opts.enforce_energy_bound && f_eps > params.k_bound * le.powf(-params.delta) {
        return Err(Error::pre(format!(
            "measured F_eps = {f_eps:.4e} exceeds K |log eps|^-delta = {:.4e}",
            params.k_bound * le.powf(-params.delta)
        )));
    }

    let sigma = params.sigma();
    let s1 = params.s1();
    let s2 = s1;
    let mut steps = StepSummary {
        sigma,
        s1,
        s2,
        s3: None,
        c1: None,
        step1_sum_radii: 0.0,
        step1_budget: eps.powf(params.alpha + 2.0 * sigma),
        few: 0,
        many: 0,
        a1: 0,
        a2: 0,
        a3: 0,
        count_constant: 0.0,
        deleted: Vec::new(),
        step3_quiet_step: None,
        step3_annulus_energy: None,
    };
    let mut traces = Vec::new();
    let mut tilde = beta.clone();
    let mut balls = Vec::new();
    let mut curl = Vec::new();
    let mut reduced = DislocationMeasure::new(Vec::new());

    if !mu.is_empty() {
        // Step 1: grow the cores to s1.
        let cores: Vec<Ball> =
            mu.atoms.iter().enumerate().map(|(k, a)| Ball::new(k, a.x, eps)).collect();
        let start1 = prepare_disjoint_cover(&cores)?;
        let t1 = run_construction(&start1, params.c, &StopRule::at_time(s1))?;
        let fm = t1.classify_few_many(mu, s1, s1 / 2.0)?;
        steps.few = fm.count(BallClass::Few);
        steps.many = fm.count(BallClass::Many);
        let fam1 = t1.family(s1);
        steps.step1_sum_radii = fam1.iter().map(|b| b.radius).sum();
        traces.push(t1);

        // Step 2: classify and delete dipolar balls.
        let t2 = run_construction(&fam1, params.c, &StopRule::at_time(s2))?;
        let cls = t2.classify_a123(mu, s2, s2 / 2.0)?;
        steps.a1 = cls.count(BallClass::A1);
        steps.a2 = cls.count(BallClass::A2);
        steps.a3 = cls.count(BallClass::A3);
        steps.count_constant = (steps.a1 + steps.a2) as f64 / dil;
        let alive2 = t2.alive_at(s2);
        let owner: Vec<Option<usize>> =
            mu.atoms.iter().map(|a| owner_at(&t2, &alive2, s2, a.x)).collect();
        if owner.iter().any(|o| o.is_none()) {
            return Err(Error::Internal("an atom is not covered by the second construction".into()));
        }
        let a3 = cls.ids(BallClass::A3);
        let sel_n = opts.selection_n_theta.max(8);
        let breaks0 = beta.interfaces();
        let deletions: Vec<Result<(DeletedBall, Vec<Patch>)>> = a3
            .par_iter()
            .map(|&id| {
                let quiet = t2.quiet_steps(id, s2)?;
                let mut best: Option<(i64, f64, Vec<usize>)> = None;
                for n in quiet {
                    let ps = t2.parents(id, s2, n as f64)?;
                    let e: f64 = ps
                        .iter()
                        .map(|&j| {
                            let ctr = t2.nodes[j].center;
                            annulus_energy(
                                ctr,
                                t2.radius(j, n as f64),
                                t2.radius(j, n as f64 + 1.0),
                                sel_n,
                                c,
                                |x| beta.eval(x),
                            )
                        })
                        .sum();
                    if best.as_ref().is_none_or(|b| e < b.1) {
                        best = Some((n, e, ps));
                    }
                }
                let (n, e, ps) = best.ok_or_else(|| {
                    Error::Internal(format!("dipolar ball {id} has no quiet step"))
                })?;
                let mut patches = Vec::with_capacity(ps.len());
                for j in ps {
                    let ctr = t2.nodes[j].center;
                    let (r_in, r_out) = (t2.radius(j, n as f64), t2.radius(j, n as f64 + 1.0));
                    let res = harmonic_gradient_extension_with_breaks(
                        &|x| beta.eval(x),
                        ctr,
                        r_in,
                        r_out,
                        &opts.extension,
                        &breaks0,
                    )
                    .map_err(|err| Error::Internal(format!("dipolar ball {id}, parent {j}: {err}")))?;
                    let rho = res.extension.rho;
                    patches.push(Patch { ext: res.extension, r_out: rho, subtract: None });
                }
                let atoms = owner.iter().filter(|o| **o == Some(id)).count();
                Ok((
                    DeletedBall {
                        ball: t2.ball(id, s2),
                        quiet_step: n,
                        parents: patches.len(),
                        annulus_energy: e,
                        atoms,
                    },
                    patches,
                ))
            })
            .collect();
        let mut level = Vec::new();
        for d in deletions {
            let (rec, ps) = d?;
            steps.deleted.push(rec);
            level.extend(ps);
        }
        tilde.push_level(level);
        let keep: Vec<usize> = alive2
            .iter()
            .copied()
            .filter(|&id| matches!(cls.class_of(id), Some(BallClass::A1 | BallClass::A2)))
            .collect();
        reduced = DislocationMeasure::new(
            mu.atoms
                .iter()
                .zip(&owner)
                .filter(|(_, o)| o.is_some_and(|k| keep.contains(&k)))
                .map(|(a, _)| *a)
                .collect(),
        );
        traces.push(t2.clone());

        // Step 3: replace the circulation condition on the survivors.
        if !keep.is_empty() {
            let start3: Vec<Ball> = keep.iter().map(|&id| t2.ball(id, s2)).collect();
            let c1 = params.c1.unwrap_or_else(|| {
                (sigma / (8.0 * steps.count_constant.max(f64::MIN_POSITIVE))).exp()
            });
            let s3 = (0.5 * sigma * le / c1.ln()).ceil();
            steps.c1 = Some(c1);
            steps.s3 = Some(s3);
            let t3 = run_construction(&start3, c1, &StopRule::at_time(s3))?;
            let first = (s3 / 2.0).ceil() as i64;
            let last = s3 as i64 - 1;
            let merge_times: Vec<f64> = t3.merges.iter().map(|m| m.time).collect();
            let candidates: Vec<i64> = (first..=last)
                .filter(|&n| !merge_times.iter().any(|&m| m > n as f64 && m <= n as f64 + 1.0))
                .collect();
            let scored: Vec<(i64, f64)> = candidates
                .par_iter()
                .map(|&n| {
                    let e = t3
                        .alive_at(n as f64)
                        .iter()
                        .map(|&i| {
                            annulus_energy(
                                t3.nodes[i].center,
                                t3.radius(i, n as f64),
                                t3.radius(i, n as f64 + 1.0),
                                sel_n,
                                c,
                                |x| tilde.eval(x),
                            )
                        })
                        .sum();
                    (n, e)
                })
                .collect();
            let (n, e) = scored
                .into_iter()
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .ok_or_else(|| {
                    Error::num(format!("no quiet step in [{first}, {last}] of the third construction"))
                })?;
            steps.step3_quiet_step = Some(n);
            steps.step3_annulus_energy = Some(e);
            let nf = n as f64;
            let leaf = t3.leaf_masses(&reduced);
            let alive3 = t3.alive_at(nf);
            let patch_discs: Vec<(Vec2, f64)> =
                tilde.levels.iter().flatten().map(|p| (p.ext.center, p.ext.rho)).collect();
            let breaks1 = tilde.interfaces();
            let made: Vec<Result<(Patch, CurlCircle, Ball)>> = alive3
                .par_iter()
                .map(|&i| {
                    let ctr = t3.nodes[i].center;
                    let (r_in, r_out) = (t3.radius(i, nf), t3.radius(i, nf + 1.0));
                    let xi = mass_below(&t3, i, &leaf);
                    let k = KField::new(xi, ctr);
                    let g = |x: Vec2| tilde.eval(x) - k.eval_unchecked(x);
                    let mut ext_opts = opts.extension;
                    ext_opts.match_radius = Some(match_radius(ctr, r_in, r_out, &patch_discs));
                    let res = harmonic_gradient_extension_with_breaks(
                        &g, ctr, r_in, r_out, &ext_opts, &breaks1,
                    )
                    .map_err(|err| Error::Internal(format!("surviving ball {i}: {err}")))?;
                    let zero = xi == Vec2::zeros();
                    let rho = res.extension.rho;
                    let patch = Patch {
                        ext: res.extension,
                        r_out: if zero { rho } else { r_out },
                        subtract: if zero { None } else { Some(k) },
                    };
                    Ok((patch, CurlCircle { center: ctr, radius: r_out, xi }, Ball::new(i, ctr, r_out)))
                })
                .collect();
            let mut level = Vec::new();
            for m in made {
                let (p, cc, b) = m?;
                level.push(p);
                curl.push(cc);
                balls.push(b);
            }
            tilde.push_level(level);
            traces.push(t3);
        }
    }
    let field = tilde;

    let diagnostics = diagnose(DiagnoseInput {
        mu,
        beta,
        field: &field,
        region,
        params,
        balls: &balls,
        curl: &curl,
        elastic,
        core,
        c,
        quad: &quad,
    })?;
    Ok(SurgeryResult { field, balls, curl, reduced, steps, diagnostics, traces })
}

struct DiagnoseInput<'a> {
    mu: &'a DislocationMeasure,
    beta: &'a StrainField,
    field: &'a StrainField,
    region: &'a Region,
    params: &'a SurgeryParams,
    balls: &'a [Ball],
    curl: &'a [CurlCircle],
    elastic: f64,
    core: f64,
    c: &'a ElasticTensor,
    quad: &'a QuadOptions,
}

fn diagnose(inp: DiagnoseInput) -> Result<Diagnostics> {
    let DiagnoseInput { mu, beta, field, region, params, balls, curl, elastic, core, c, quad } = inp;
    let eps = params.eps;
    let le = params.log_eps();
    let dil = le.powf(1.0 - params.delta);
    let tol = params.options.circulation_tol * core.max(1.0);
    let ea = eps.powf(params.alpha);

    // (i)
    let max_diameter = balls.iter().map(|b| 2.0 * b.radius).fold(0.0, f64::max);
    let meets_support =
        balls.iter().all(|b| mu.atoms.iter().any(|a| b.contains_point(a.x, 1e-9)));
    let diameter = DiameterCheck {
        max_diameter,
        bound: ea,
        meets_support,
        pass: max_diameter <= ea && meets_support,
    };

    // (ii)
    let count = CountCheck { count: balls.len(), constant: balls.len() as f64 / dil };

    // (iii): Halton points in the region plus probes just outside each patch.
    let near = |p: Vec2| mu.atoms.iter().any(|a| (p - a.x).norm() <= ea);
    let (lo, hi) = region.bbox();
    let mut pts: Vec<Vec2> = (1..=params.options.locality_samples)
        .map(|k| lo + (hi - lo).component_mul(&Vec2::new(halton(k, 2), halton(k, 3))))
        .collect();
    for p in field.levels.iter().flatten() {
        let r = p.r_out.max(p.ext.rho) * 1.01;
        pts.extend(circle_loop(p.ext.center, r, 16));
    }
    pts.retain(|&p| region.contains(p) && !near(p));
    let scale = 1.0 + pts.iter().map(|&p| beta.eval(p).norm()).fold(0.0, f64::max);
    let max_deviation =
        pts.iter().map(|&p| (field.eval(p) - beta.eval(p)).norm()).fold(0.0, f64::max);
    let locality = LocalityCheck {
        samples: pts.len(),
        max_deviation,
        pass: max_deviation <= 1e-12 * scale,
    };

    // (iv)
    let f = |x: Vec2| field.eval(x);
    let breaks = field.interfaces();
    let mut max_free = 0.0_f64;
    let mut max_ball: f64 = 0.0;
    let mut curl_sum = Vec2::zeros();
    for p in field.levels.iter().flatten() {
        let inner = circle_circulation(&f, p.ext.center, 0.5 * p.ext.rho, &breaks, 0.05);
        max_free = max_free.max(inner.norm());
        if p.r_out > p.ext.rho {
            let mid = (p.ext.rho * p.r_out).sqrt();
            let v = circle_circulation(&f, p.ext.center, mid, &breaks, 0.05);
            max_free = max_free.max(v.norm());
        }
    }
    for (k, cc) in curl.iter().enumerate() {
        let gap = balls
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, b)| (b.center - cc.center).norm() - b.radius - cc.radius)
            .fold(f64::INFINITY, f64::min);
        let r = cc.radius + (0.01 * cc.radius).min(0.5 * gap);
        let v = circle_circulation(&f, cc.center, r, &breaks, 0.05);
        max_ball = max_ball.max((v - cc.xi).norm());
        curl_sum += v;
    }
    let curl_support = CurlSupportCheck {
        max_free_circulation: max_free,
        max_ball_error: max_ball,
        pass: max_free <= tol && max_ball <= tol,
    };

    // (v)
    let mu_a = mu.mass_where(|x| region.contains(x));
    let spacing = mu
        .atoms
        .iter()
        .map(|a| region.dist_to_boundary(a.x))
        .fold(f64::INFINITY, f64::min)
        .min(0.05)
        / 4.0;
    let boundary = region.boundary_circulation(&f, spacing, &breaks)?;
    let error = (curl_sum - mu_a).norm().max((boundary - mu_a).norm());
    let conservation = ConservationCheck {
        components: vec![ComponentCheck { mu: mu_a, curl_sum, boundary_circulation: boundary, error }],
        max_error: error,
        tolerance: tol,
        pass: error <= tol,
    };

    // (vi)
    let mut tv = 0.0;
    for cc in curl {
        if cc.xi != Vec2::zeros() {
            tv += boundary_mass_k(&cc.density(), cc.center, cc.radius, 1024)?;
        }
    }
    let variation = VariationCheck {
        total_variation: tv,
        mu_variation: core,
        constant: tv / dil,
        pass: tv <= core * (1.0 + 1e-12) + 1e-12,
    };

    // (vii)
    let modified = energy_over(field, region, &[], eps, c, quad)?;
    let total = elastic + core;
    let factor = if total > 0.0 { modified / total } else { 1.0 };
    let energy = EnergyCheck {
        modified,
        elastic,
        core,
        f_eps: total / (le * le),
        factor,
        constant: (factor - 1.0) * le,
    };
    Ok(Diagnostics { diameter, count, locality, curl_support, conservation, variation, energy })
}
