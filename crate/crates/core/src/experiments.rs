//! Configuration generators and the scaling harness.
//!
//! Every generator is driven by a ChaCha8 stream seeded from the configured
//! 64-bit seed. Sweeps reuse the same seed at every ladder point, so the
//! sampled positions of a smaller configuration are a prefix of those of a
//! larger one whenever the rejection radii agree. Clusters, dipoles and
//! recovery cells draw from their own streams `1 + k` of the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annulus::{Discretization, PsiLimit, DEFAULT_LADDER as PSI_LADDER};
use crate::error::{Error, Result};
use crate::fields::{
    energy_f_eps, field_geometry, integrate, DiscOverlay, Outer, QuadGeometry, QuadOptions, StrainField,
};
use crate::flat::{flat_convergence_monitor, FlatMonitorReport};
use crate::geom::{self, Mat2, Vec2};
use crate::model::{grid_components, Atom, BurgersLattice, DislocationMeasure, Domain, ElasticTensor, ReducedDomain};
use crate::relax::Relaxation;
use crate::surgery::{liminf_lower_bound, LiminfParams};

/// Default core-radius ladder.
pub const DEFAULT_LADDER: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// Largest admissible ladder value, `e^-2`.
pub const MAX_EPS: f64 = 0.135_335_283_236_612_7;

/// How many atoms a generator places at core radius `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountRule {
    Fixed(usize),
    /// `round(|log eps|^(1/2))`.
    Subcritical,
    /// `round(|log eps|)`.
    Critical,
    /// `round(|log eps|^2)`.
    Supercritical,
    /// `round(scale |log eps|^power)`.
    Power { scale: f64, power: f64 },
}

impl CountRule {
    pub fn count(&self, eps: f64) -> usize {
        let le = eps.ln().abs();
        let v = match self {
            CountRule::Fixed(n) => return *n,
            CountRule::Subcritical => le.sqrt(),
            CountRule::Critical => le,
            CountRule::Supercritical => le * le,
            CountRule::Power { scale, power } => scale * le.powf(*power),
        };
        v.round().max(0.0) as usize
    }
}

/// Burgers vector assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurgersRule {
    /// Uniform among `+-b1, +-b2`.
    Random,
    /// `+b1, -b1, +b1, ...`.
    Alternating,
    Fixed([f64; 2]),
}

impl BurgersRule {
    fn pick(&self, k: usize, lattice: &BurgersLattice, rng: &mut ChaCha8Rng) -> Vec2 {
        match self {
            BurgersRule::Random => match rng.random_range(0..4u32) {
                0 => lattice.b1(),
                1 => -lattice.b1(),
                2 => lattice.b2(),
                _ => -lattice.b2(),
            },
            BurgersRule::Alternating => {
                if k % 2 == 0 {
                    lattice.b1()
                } else {
                    -lattice.b1()
                }
            }
            BurgersRule::Fixed(v) => Vec2::from(*v),
        }
    }
}

fn default_gamma0() -> f64 {
    0.5
}
fn default_margin() -> f64 {
    0.1
}
fn default_separation() -> f64 {
    0.2
}
fn default_cluster_alpha() -> f64 {
    0.4
}
fn default_atom_gap() -> f64 {
    3.0
}
fn default_dipole_gap() -> f64 {
    4.0
}
fn default_ring_cores() -> usize {
    8
}
fn default_ring_factor() -> f64 {
    2.4
}
fn default_random() -> BurgersRule {
    BurgersRule::Random
}

/// Generator kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Atoms at pairwise distance at least `eps^gamma0` and at least
    /// `margin` from the boundary. A single atom sits at the centre of the
    /// bounding box.
    WellSeparated {
        count: CountRule,
        #[serde(default = "default_gamma0")]
        gamma0: f64,
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_random")]
        burgers: BurgersRule,
    },
    /// `clusters` groups of `per_cluster` atoms, each inside a disc of
    /// diameter `eps^alpha`, atoms at least `atom_gap * eps` apart and
    /// cluster centres at least `separation` apart.
    Clustered {
        clusters: usize,
        per_cluster: usize,
        #[serde(default = "default_cluster_alpha")]
        alpha: f64,
        #[serde(default = "default_atom_gap")]
        atom_gap: f64,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_random")]
        burgers: BurgersRule,
    },
    /// `pairs` dipoles `+-xi` at distance `gap * eps`, pair centres at least
    /// `separation` apart.
    DipoleArray {
        pairs: usize,
        #[serde(default = "default_dipole_gap")]
        gap: f64,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_random")]
        burgers: BurgersRule,
    },
    /// `cores` atoms of alternating sign on a circle of radius
    /// `ring_factor * eps`, close enough that their cores overlap and cut off
    /// the enclosed disc. The strain is the superposition plus the constant
    /// skew matrix `skew |log eps|^2 / rho J` on the enclosed disc.
    DisconnectingRing {
        #[serde(default = "default_ring_cores")]
        cores: usize,
        #[serde(default)]
        center: Option<[f64; 2]>,
        #[serde(default = "default_ring_factor")]
        ring_factor: f64,
        #[serde(default)]
        skew: f64,
    },
}

/// Generated measure together with its admissible strain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Configuration {
    pub eps: f64,
    pub mu: DislocationMeasure,
    pub beta: StrainField,
    /// Constant skew coordinate placed on the enclosed disc of a ring.
    pub skew_patch: Option<f64>,
}

/// Stream `k` of `seed`.
pub fn rng_stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn sample_in(domain: &Domain, margin: f64, rng: &mut ChaCha8Rng) -> Result<Vec2> {
    let (lo, hi) = domain.bbox();
    for _ in 0..MAX_TRIES {
        let p = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if domain.contains(p) && domain.dist_to_boundary(p) >= margin {
            return Ok(p);
        }
    }
    Err(Error::pre("no point of the domain keeps the boundary margin"))
}

const MAX_TRIES: usize = 20_000;

/// Rejection sampling of `n` points at pairwise distance at least `sep`.
fn sample_separated(
    n: usize,
    sep: f64,
    domain: &Domain,
    margin: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec2>> {
    let (lo, hi) = domain.bbox();
    if margin * 2.0 >= (hi - lo).min() {
        return Err(Error::pre("boundary margin leaves no room for atoms"));
    }
    let mut pts: Vec<Vec2> = Vec::with_capacity(n);
    while pts.len() < n {
        let mut placed = false;
        for _ in 0..MAX_TRIES {
            let p = sample_in(domain, margin, rng)?;
            if pts.iter().all(|q| (p - q).norm() >= sep) {
                pts.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::pre(format!(
                "cannot place {n} points {sep:.3e} apart: infeasible packing"
            )));
        }
    }
    Ok(pts)
}

fn sample_disc(
    n: usize,
    center: Vec2,
    radius: f64,
    sep: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec2>> {
    let mut pts: Vec<Vec2> = Vec::with_capacity(n);
    while pts.len() < n {
        let mut placed = false;
        for _ in 0..MAX_TRIES {
            let r = radius * rng.random::<f64>().sqrt();
            let t = std::f64::consts::TAU * rng.random::<f64>();
            let p = center + Vec2::new(r * t.cos(), r * t.sin());
            if pts.iter().all(|q| (p - q).norm() >= sep) {
                pts.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::pre(format!(
                "cannot place {n} atoms {sep:.3e} apart in a disc of radius {radius:.3e}"
            )));
        }
    }
    Ok(pts)
}

fn unit_skew() -> Mat2 {
    geom::skew_from(1.0)
}

/// Samples a configuration of the given kind at core radius `eps`.
pub fn gen_configuration(
    spec: &GeneratorSpec,
    domain: &Domain,
    lattice: &BurgersLattice,
    eps: f64,
    seed: u64,
) -> Result<Configuration> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::pre("eps must lie in (0, 1)"));
    }
    let mut rng = rng_stream(seed, 0);
    let (lo, hi) = domain.bbox();
    let mid = (lo + hi) * 0.5;
    let mut skew_patch = None;
    let mut overlay = None;
    let atoms: Vec<Atom> = match spec {
        GeneratorSpec::WellSeparated { count, gamma0, margin, burgers } => {
            if !(*gamma0 > 0.0 && *gamma0 < 1.0) {
                return Err(Error::pre("gamma0 must lie in (0, 1)"));
            }
            let n = count.count(eps);
            let pts = if n == 1 && domain.contains(mid) && domain.dist_to_boundary(mid) >= *margin {
                vec![mid]
            } else {
                sample_separated(n, eps.powf(*gamma0), domain, *margin, &mut rng)?
            };
            pts.into_iter()
                .enumerate()
                .map(|(k, p)| Atom::new(p, burgers.pick(k, lattice, &mut rng)))
                .collect()
        }
        GeneratorSpec::Clustered { clusters, per_cluster, alpha, atom_gap, separation, margin, burgers } => {
            if !(*alpha > 0.0 && *alpha < 1.0) {
                return Err(Error::pre("cluster exponent must lie in (0, 1)"));
            }
            let radius = 0.5 * eps.powf(*alpha);
            let centers = sample_separated(*clusters, *separation, domain, margin + radius, &mut rng)?;
            let mut out = Vec::new();
            for (j, c) in centers.iter().enumerate() {
                let mut sub = rng_stream(seed, 1 + j as u64);
                let pts = sample_disc(*per_cluster, *c, radius, atom_gap * eps, &mut sub)?;
                for (k, p) in pts.into_iter().enumerate() {
                    out.push(Atom::new(p, burgers.pick(k, lattice, &mut sub)));
                }
            }
            out
        }
        GeneratorSpec::DipoleArray { pairs, gap, separation, margin, burgers } => {
            let half = 0.5 * gap * eps;
            let centers = sample_separated(*pairs, *separation, domain, margin + half, &mut rng)?;
            let mut out = Vec::new();
            for (j, c) in centers.iter().enumerate() {
                let mut sub = rng_stream(seed, 1 + j as u64);
                let xi = burgers.pick(0, lattice, &mut sub);
                let t = std::f64::consts::TAU * sub.random::<f64>();
                let d = Vec2::new(t.cos(), t.sin()) * half;
                out.push(Atom::new(c - d, xi));
                out.push(Atom::new(c + d, -xi));
            }
            out
        }
        GeneratorSpec::DisconnectingRing { cores, center, ring_factor, skew } => {
            let n = *cores;
            if n < 4 || n % 2 != 0 {
                return Err(Error::pre("a ring needs an even number of at least 4 cores"));
            }
            let rho = ring_factor * eps;
            let half = std::f64::consts::PI / n as f64;
            // neighbouring cores overlap and the circle itself is covered
            if 2.0 * rho * half.sin() >= 2.0 * eps || 2.0 * rho * (0.5 * half).sin() >= eps {
                return Err(Error::pre("ring cores do not overlap; lower ring_factor"));
            }
            if rho <= eps {
                return Err(Error::pre("ring radius must exceed eps"));
            }
            let c = center.map(Vec2::from).unwrap_or(mid);
            if !domain.contains(c) || domain.dist_to_boundary(c) <= rho + eps {
                return Err(Error::pre("ring does not fit in the domain"));
            }
            let le = eps.ln().abs();
            let w = skew * le * le / rho;
            if w != 0.0 {
                skew_patch = Some(w);
                overlay = Some(DiscOverlay { center: c, radius: rho, value: unit_skew() * w });
            }
            (0..n)
                .map(|k| {
                    let t = 2.0 * half * k as f64;
                    let p = c + Vec2::new(t.cos(), t.sin()) * rho;
                    Atom::new(p, if k % 2 == 0 { lattice.b1() } else { -lattice.b1() })
                })
                .collect()
        }
    };
    let mu = DislocationMeasure::new(atoms);
    let mut beta = StrainField::superposition(&mu, eps)?;
    if let Some(o) = overlay {
        beta = beta.with_overlay(o);
    }
    Ok(Configuration { eps, mu, beta, skew_patch })
}

/// Quadrature resolution relative to the core radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// `h_min = h_min_factor * eps`, at most 1/4.
    pub h_min_factor: f64,
    /// Largest quadrature cell, or a 32nd of the domain when absent.
    #[serde(default)]
    pub h_max: Option<f64>,
    /// Flat-norm grid spacing.
    pub flat_h: f64,
    /// Annulus discretization for cell energies and `psi`.
    #[serde(default)]
    pub annulus: Discretization,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { h_min_factor: 0.25, h_max: None, flat_h: 0.02, annulus: Discretization::default() }
    }
}

impl Resolution {
    pub fn quad(&self, eps: f64) -> QuadOptions {
        let mut q = QuadOptions::new(self.h_min_factor.min(0.25) * eps);
        q.h_max = self.h_max;
        q
    }
}

/// Parameters of the near-field bound in the gap report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiminfSettings {
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
    pub delta: f64,
    pub n_windows: usize,
    pub c: f64,
}

impl Default for LiminfSettings {
    fn default() -> Self {
        LiminfSettings { alpha: 0.9, gamma: 0.3, eta: 0.0, delta: 0.1, n_windows: 1, c: 1.1 }
    }
}

/// One cell of a piecewise-constant target density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCell {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Burgers density per unit area.
    pub density: [f64; 2],
}

fn default_target_resolution() -> usize {
    24
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTarget {
    pub cells: Vec<DensityCell>,
    /// Sample points per unit length used to discretize the target.
    #[serde(default = "default_target_resolution")]
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExperimentKind {
    EnergySweep,
    LiminfGap {
        #[serde(default)]
        liminf: LiminfSettings,
    },
    Compactness,
    Recovery { target: RecoveryTarget },
}

fn default_ladder() -> Vec<f64> {
    DEFAULT_LADDER.to_vec()
}
fn default_domain() -> Domain {
    Domain::unit_square()
}
fn default_lattice() -> BurgersLattice {
    BurgersLattice::square()
}
fn default_tensor() -> ElasticTensor {
    ElasticTensor::isotropic(1.0, 1.0).expect("valid moduli")
}
fn default_reduction() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default = "default_lattice")]
    pub lattice: BurgersLattice,
    #[serde(default = "default_tensor")]
    pub tensor: ElasticTensor,
    #[serde(default)]
    pub resolution: Resolution,
    /// Exponent of the reduced domain `Omega_{eps^gamma}(mu)`.
    #[serde(default = "default_reduction")]
    pub reduction_gamma: f64,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, generator: Option<GeneratorSpec>) -> Self {
        ExperimentConfig {
            name: String::new(),
            experiment,
            generator,
            seed: 0,
            ladder: default_ladder(),
            domain: default_domain(),
            lattice: default_lattice(),
            tensor: default_tensor(),
            resolution: Resolution::default(),
            reduction_gamma: default_reduction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::Schema { key: "ladder".into(), msg: "must not be empty".into() });
        }
        if let Some(e) = self.ladder.iter().find(|e| !(**e > 0.0 && **e < MAX_EPS)) {
            return Err(Error::Schema { key: "ladder".into(), msg: format!("{e} is outside (0, e^-2)") });
        }
        if self.ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Schema { key: "ladder".into(), msg: "must be strictly decreasing".into() });
        }
        if !(self.reduction_gamma > 0.0 && self.reduction_gamma < 1.0) {
            return Err(Error::Schema { key: "reduction_gamma".into(), msg: "must lie in (0, 1)".into() });
        }
        if !(self.resolution.h_min_factor > 0.0) || !(self.resolution.flat_h > 0.0) {
            return Err(Error::Schema { key: "resolution".into(), msg: "spacings must be positive".into() });
        }
        let needs_generator = !matches!(self.experiment, ExperimentKind::Recovery { .. });
        if needs_generator && self.generator.is_none() {
            return Err(Error::Schema { key: "generator".into(), msg: "required for this experiment".into() });
        }
        Ok(())
    }

    fn generator(&self) -> Result<&GeneratorSpec> {
        self.generator
            .as_ref()
            .ok_or_else(|| Error::Schema { key: "generator".into(), msg: "missing".into() })
    }

    pub fn configuration(&self, eps: f64) -> Result<Configuration> {
        gen_configuration(self.generator()?, &self.domain, &self.lattice, eps, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub log_eps: f64,
    pub n: usize,
    pub elastic: f64,
    pub core: f64,
    pub f_eps: f64,
    /// Relative change of the elastic energy under quadrature refinement.
    pub rel_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFlags {
    /// `max F_eps / min F_eps` over the ladder.
    pub band_ratio: f64,
    pub within_band: bool,
    /// `F_eps` strictly increases as `eps` decreases.
    pub increasing: bool,
    /// Least-squares slope of `log F_eps` against `log |log eps|`.
    pub log_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub trend: TrendFlags,
}

/// Band width for the critical regime.
pub const CRITICAL_BAND: f64 = 3.0;

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

pub fn trend_flags(rows: &[SweepRow]) -> TrendFlags {
    let fs: Vec<f64> = rows.iter().map(|r| r.f_eps).collect();
    let max = fs.iter().cloned().fold(0.0, f64::max);
    let min = fs.iter().cloned().fold(f64::INFINITY, f64::min);
    let band_ratio = if max == 0.0 { 1.0 } else { max / min };
    let les: Vec<f64> = rows.iter().map(|r| r.log_eps).collect();
    TrendFlags {
        band_ratio,
        within_band: band_ratio <= CRITICAL_BAND,
        increasing: fs.windows(2).all(|w| w[1] > w[0]),
        log_slope: log_slope(&les, &fs),
    }
}

/// Measured `F_eps` of the generated configuration along the ladder.
pub fn energy_scaling_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let rows: Vec<SweepRow> = config
        .ladder
        .par_iter()
        .map(|&eps| {
            let conf = config.configuration(eps)?;
            let est = energy_f_eps(
                &conf.mu,
                &conf.beta,
                &config.domain,
                eps,
                &config.tensor,
                &config.resolution.quad(eps),
            )?;
            Ok(SweepRow {
                eps,
                log_eps: eps.ln().abs(),
                n: conf.mu.len(),
                elastic: est.report.elastic,
                core: est.report.core,
                f_eps: est.report.rescaled_total,
                rel_change: est.rel_change,
            })
        })
        .collect::<Result<_>>()?;
    let trend = trend_flags(&rows);
    Ok(SweepReport { rows, trend })
}

/// Quadrature geometry of `Omega_r(mu)` for a field whose own cores have
/// radius at most `r`.
fn reduced_geometry<'a>(beta: &StrainField, omega: &'a Domain, centers: &[Vec2], r: f64) -> QuadGeometry<'a> {
    let mut geo = field_geometry(beta, Outer::Polygon(omega), centers, beta.eps.min(r));
    if r > beta.eps {
        geo.holes.retain(|(c, _)| !centers.contains(c));
        geo.holes.extend(centers.iter().map(|c| (*c, r)));
    }
    geo
}

/// `int_{Omega_r(mu)} 1/2 C beta : beta`.
pub fn reduced_elastic_energy(
    beta: &StrainField,
    mu: &DislocationMeasure,
    omega: &Domain,
    r: f64,
    c: &ElasticTensor,
    opts: &QuadOptions,
) -> Result<f64> {
    ReducedDomain::new(omega, mu, r)?;
    let geo = reduced_geometry(beta, omega, &mu.positions(), r);
    integrate(&geo, opts, |x| c.density(&beta.eval(x)))
}

/// Self-energy data shared by the gap and recovery reports.
pub fn relaxation_for(config: &ExperimentConfig) -> Result<Relaxation> {
    let lim = PsiLimit::compute(&config.tensor, &PSI_LADDER, &config.resolution.annulus)?;
    Relaxation::new(&config.lattice, &lim, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub eps: f64,
    pub log_eps: f64,
    pub n: usize,
    /// Measured `F_eps`.
    pub f_eps: f64,
    /// Elastic energy over `Omega_{eps^gamma}(mu)` over `|log eps|^2`.
    pub far_field: f64,
    /// Certified near-field bound over `|log eps|^2`.
    pub near_field: f64,
    /// Measured energy on the annuli behind the certified bound, rescaled.
    pub near_measured: f64,
    /// `(alpha - gamma - eta - delta_tilde) |log eps| sum_j phi(mu(A^j))`
    /// over `|log eps|^2`.
    pub phi_bound: f64,
    /// `far_field + near_field`.
    pub lower_total: f64,
    /// Limit functional of `mu / |log eps|`: the far field plus
    /// `sum_i phi(xi_i) / |log eps|`.
    pub limit_value: f64,
    /// `f_eps - lower_total`.
    pub gap: f64,
    /// Certified near field over `|log eps| sum_j phi(mu(A^j))`.
    pub near_ratio: f64,
    pub factor: f64,
    pub boundary_clusters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    /// The certified lower bound never exceeds the measured energy.
    pub bound_holds: bool,
}

/// Splits the measured energy into far and near contributions and compares
/// them with the certified near-field bound.
pub fn liminf_gap_report(config: &ExperimentConfig) -> Result<GapReport> {
    config.validate()?;
    let settings = match &config.experiment {
        ExperimentKind::LiminfGap { liminf } => liminf.clone(),
        _ => LiminfSettings::default(),
    };
    let relax = relaxation_for(config)?;
    let disc = config.resolution.annulus;
    let mut rows = Vec::with_capacity(config.ladder.len());
    for &eps in &config.ladder {
        let conf = config.configuration(eps)?;
        let le = eps.ln().abs();
        let l2 = le * le;
        let opts = config.resolution.quad(eps);
        let est = energy_f_eps(&conf.mu, &conf.beta, &config.domain, eps, &config.tensor, &opts)?;
        let r = eps.powf(config.reduction_gamma);
        let far = if conf.mu.is_empty() {
            est.report.elastic
        } else {
            let mut o = QuadOptions::new(r / 4.0);
            o.h_max = opts.h_max;
            reduced_elastic_energy(&conf.beta, &conf.mu, &config.domain, r, &config.tensor, &o)?
        };
        let params = LiminfParams {
            alpha: settings.alpha,
            gamma: settings.gamma,
            eta: settings.eta,
            delta: settings.delta,
            n_windows: settings.n_windows,
            c: settings.c,
            eps,
        };
        let lb = liminf_lower_bound(&conf.mu, &conf.beta, &config.domain, &params, &config.tensor, &relax, &disc, true)?;
        let measured: f64 = lb.clusters.iter().filter_map(|c| c.measured).sum();
        let phi_mass: f64 = lb.clusters.iter().map(|c| c.phi_mass).sum();
        let near = lb.value / l2;
        let far_field = far / l2;
        let limit_value = far_field + relax.relaxed_integral(&conf.mu) / le;
        rows.push(GapRow {
            eps,
            log_eps: le,
            n: conf.mu.len(),
            f_eps: est.report.rescaled_total,
            far_field,
            near_field: near,
            near_measured: measured / l2,
            phi_bound: lb.phi_bound / l2,
            lower_total: far_field + near,
            limit_value,
            gap: est.report.rescaled_total - far_field - near,
            near_ratio: if phi_mass > 0.0 { lb.value / (le * phi_mass) } else { 0.0 },
            factor: lb.factor,
            boundary_clusters: lb.boundary_clusters,
        });
    }
    let bound_holds = rows.iter().all(|r| r.near_field <= r.f_eps * (1.0 + 1e-9) + 1e-15);
    Ok(GapReport { rows, bound_holds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessRow {
    pub eps: f64,
    pub log_eps: f64,
    pub n: usize,
    pub f_eps: f64,
    /// Best-fit skew coordinate on `Omega_{eps^gamma}(mu)`.
    pub skew_fit: f64,
    /// `min_W ||beta - W||_{L2(Omega_{eps^gamma})} / |log eps|`.
    pub reduced_norm: f64,
    /// `min_W ||beta - W||_{L2(Omega_eps)} / |log eps|`.
    pub full_norm: f64,
    /// `||beta||_{L2(Omega_eps)} / |log eps|`.
    pub raw_full_norm: f64,
    /// `||beta_sym||_{L2(Omega_eps)} / |log eps|`.
    pub sym_norm: f64,
    /// `full_norm / reduced_norm`, infinite (null in JSON) when the reduced
    /// norm vanishes.
    #[serde(with = "crate::ball::inf_serde")]
    pub ratio: f64,
    /// Components of `Omega_eps(mu)` by flood fill.
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub rows: Vec<CompactnessRow>,
    /// Flat distance of `mu_k / |log eps_k|` to the empty measure; absent when
    /// the grid cannot resolve the atoms.
    pub flat: Option<FlatMonitorReport>,
    /// Reduced norms stay below the largest rescaled energy bound.
    pub reduced_bounded: bool,
    /// Full-domain norms grow along the ladder.
    pub full_growing: bool,
    #[serde(with = "crate::ball::inf_serde")]
    pub min_ratio: f64,
}

/// Integrals `(area, int skew_coord(beta), int |beta|^2, int |beta_sym|^2)`
/// over the region described by `geo`.
fn moments(geo: &QuadGeometry, opts: &QuadOptions, beta: &StrainField) -> Result<[f64; 4]> {
    let area = integrate(geo, opts, |_| 1.0)?;
    let sk = integrate(geo, opts, |x| geom::skew_coord(&beta.eval(x)))?;
    let full = integrate(geo, opts, |x| beta.eval(x).norm_squared())?;
    let sym = integrate(geo, opts, |x| geom::sym(&beta.eval(x)).norm_squared())?;
    Ok([area, sk, full, sym])
}

/// `min_W int |beta - W|^2 = int |beta|^2 - 2 (int w)^2 / area` for constant
/// skew `W = skew_from(w)`, since `|skew_from(w)|^2 = 2 w^2`.
fn fitted(m: &[f64; 4]) -> (f64, f64) {
    let w = if m[0] > 0.0 { m[1] / m[0] } else { 0.0 };
    (w, (m[2] - 2.0 * w * m[1]).max(0.0))
}

/// Normalized strain norms with and without the reduction around the cores.
pub fn compactness_diagnostic(config: &ExperimentConfig) -> Result<CompactnessReport> {
    config.validate()?;
    let rows: Vec<(CompactnessRow, DislocationMeasure)> = config
        .ladder
        .par_iter()
        .map(|&eps| {
            let conf = config.configuration(eps)?;
            let le = eps.ln().abs();
            let opts = config.resolution.quad(eps);
            let est = energy_f_eps(&conf.mu, &conf.beta, &config.domain, eps, &config.tensor, &opts)?;
            let centers = conf.mu.positions();
            let full_geo = field_geometry(&conf.beta, Outer::Polygon(&config.domain), &centers, eps);
            let mf = moments(&full_geo, &opts, &conf.beta)?;
            let r = eps.powf(config.reduction_gamma);
            let mut ropts = QuadOptions::new(r / 4.0);
            ropts.h_max = opts.h_max;
            let red_geo = reduced_geometry(&conf.beta, &config.domain, &centers, r);
            let mr = moments(&red_geo, &ropts, &conf.beta)?;
            let (w_red, red) = fitted(&mr);
            let (_, full) = fitted(&mf);
            let reduced_norm = red.sqrt() / le;
            let full_norm = full.sqrt() / le;
            let components = if conf.mu.is_empty() {
                1
            } else {
                let rd = ReducedDomain::new(&config.domain, &conf.mu, eps)?;
                let h = (0.25 * eps).max(config.resolution.flat_h);
                local_components(&rd, &centers, eps, h)
            };
            Ok((
                CompactnessRow {
                    eps,
                    log_eps: le,
                    n: conf.mu.len(),
                    f_eps: est.report.rescaled_total,
                    skew_fit: w_red,
                    reduced_norm,
                    full_norm,
                    raw_full_norm: mf[2].sqrt() / le,
                    sym_norm: mf[3].sqrt() / le,
                    ratio: if reduced_norm > 0.0 { full_norm / reduced_norm } else { f64::INFINITY },
                    components,
                },
                conf.mu,
            ))
        })
        .collect::<Result<_>>()?;
    let (rows, mus): (Vec<CompactnessRow>, Vec<DislocationMeasure>) = rows.into_iter().unzip();
    let seq: Vec<(DislocationMeasure, f64)> = mus.into_iter().zip(config.ladder.iter().copied()).collect();
    let h = config.resolution.flat_h;
    let resolvable = seq.iter().all(|(m, _)| m.len() < 2 || m.min_pair_distance() >= 4.0 * h);
    let flat = if resolvable {
        Some(flat_convergence_monitor(&seq, &DislocationMeasure::default(), &config.domain, &[h])?)
    } else {
        None
    };
    let energy_scale = rows.iter().map(|r| r.f_eps).fold(0.0, f64::max).sqrt();
    let reduced_bounded = rows.iter().all(|r| r.reduced_norm <= 2.0 * energy_scale.max(1.0));
    let full_growing = rows.windows(2).all(|w| w[1].full_norm > w[0].full_norm);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(CompactnessReport { rows, flat, reduced_bounded, full_growing, min_ratio })
}

/// Components of `Omega_eps(mu)`. A flood fill at spacing `h` cannot see a
/// pocket cut off by cores of radius `eps`, so groups of overlapping cores
/// are filled in for the coarse count and their pockets are counted by a
/// fine flood fill of the box around each group.
fn local_components(rd: &ReducedDomain, centers: &[Vec2], eps: f64, h: f64) -> usize {
    let n = centers.len();
    let mut seen = vec![false; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut group = vec![s];
        seen[s] = true;
        let mut k = 0;
        while k < group.len() {
            let i = group[k];
            for j in 0..n {
                if !seen[j] && (centers[i] - centers[j]).norm() < 2.0 * eps {
                    seen[j] = true;
                    group.push(j);
                }
            }
            k += 1;
        }
        if group.len() >= 3 {
            groups.push(group);
        }
    }
    let filled: Vec<(Vec2, f64)> = groups
        .iter()
        .map(|g| {
            let c = g.iter().fold(Vec2::zeros(), |a, &i| a + centers[i]) / g.len() as f64;
            let r = g.iter().map(|&i| (centers[i] - c).norm()).fold(0.0, f64::max) + eps;
            (c, r)
        })
        .collect();
    let (lo, hi) = rd.domain.bbox();
    let mut count = grid_components(lo, hi, h, |p| {
        rd.contains(p) && !filled.iter().any(|(c, r)| (p - c).norm() < *r)
    });
    for (g, (c, r)) in groups.iter().zip(&filled) {
        let pad = Vec2::repeat(r + eps);
        let local: Vec<Vec2> = g.iter().map(|&i| centers[i]).collect();
        let e2 = eps * eps;
        let inside = |p: Vec2| rd.domain.contains(p) && !local.iter().any(|q| (p - q).norm_squared() < e2);
        // the outer frame of the box is one component; the rest are pockets
        count += grid_components(c - pad, c + pad, eps / 16.0, inside).saturating_sub(1);
    }
    count
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryEntry {
    pub eps: f64,
    pub mu: DislocationMeasure,
    pub beta: StrainField,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoverySequence {
    pub entries: Vec<RecoveryEntry>,
    /// The target sampled on a grid: one atom per sample point carrying the
    /// density times the sample area.
    pub target_atoms: DislocationMeasure,
    /// Spacing of the sample grid; recovery atoms sit on the same grid.
    pub grid: f64,
}

fn check_cells(cells: &[DensityCell], domain: &Domain) -> Result<()> {
    for (k, c) in cells.iter().enumerate() {
        let (lo, hi) = (Vec2::from(c.lo), Vec2::from(c.hi));
        if !(hi.x > lo.x && hi.y > lo.y) {
            return Err(Error::pre(format!("cell {k} is empty")));
        }
        for p in [lo, hi, Vec2::new(lo.x, hi.y), Vec2::new(hi.x, lo.y)] {
            if !domain.contains(p) && domain.dist_to_boundary(p) > 1e-12 {
                return Err(Error::pre(format!("cell {k} leaves the domain")));
            }
        }
        if c.density.iter().any(|v| !v.is_finite()) {
            return Err(Error::pre(format!("cell {k} has a non-finite density")));
        }
        for (j, d) in cells.iter().enumerate().take(k) {
            let overlap = c.lo[0] < d.hi[0] && d.lo[0] < c.hi[0] && c.lo[1] < d.hi[1] && d.lo[1] < c.hi[1];
            if overlap {
                return Err(Error::pre(format!("cells {j} and {k} overlap")));
            }
        }
    }
    Ok(())
}

/// Sample points of a cell on the global grid of spacing `g`: centres of the
/// grid squares inside the cell.
fn cell_samples(cell: &DensityCell, g: f64) -> Vec<Vec2> {
    let (lo, hi) = (Vec2::from(cell.lo), Vec2::from(cell.hi));
    let i0 = (lo.x / g - 0.5).ceil() as i64;
    let i1 = (hi.x / g - 0.5).floor() as i64;
    let j0 = (lo.y / g - 0.5).ceil() as i64;
    let j1 = (hi.y / g - 0.5).floor() as i64;
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = Vec2::new((i as f64 + 0.5) * g, (j as f64 + 0.5) * g);
            if p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y {
                out.push(p);
            }
        }
    }
    out
}

/// `m` points spread over `samples` (row-major) by picking a sub-lattice of
/// about `m` points and snapping it to the samples.
fn spread(samples: &[Vec2], cell: &DensityCell, m: usize) -> Vec<Vec2> {
    if m == 0 || samples.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = (Vec2::from(cell.lo), Vec2::from(cell.hi));
    let size = hi - lo;
    let nx = ((m as f64 * size.x / size.y).sqrt().round() as usize).clamp(1, m);
    let ny = m.div_ceil(nx);
    let mut pts = Vec::with_capacity(m);
    let slots = nx * ny;
    for k in 0..m {
        // spread the m chosen slots evenly over the nx * ny sub-lattice
        let s = (k * slots) / m;
        let (i, j) = (s % nx, s / nx);
        let q = lo + Vec2::new((i as f64 + 0.5) * size.x / nx as f64, (j as f64 + 0.5) * size.y / ny as f64);
        let near = samples
            .iter()
            .copied()
            .filter(|p| !pts.contains(p))
            .min_by(|a, b| (a - q).norm().total_cmp(&(b - q).norm()));
        if let Some(p) = near {
            pts.push(p);
        }
    }
    pts
}

/// Recovery sequence for a piecewise-constant density. Each cell receives
/// `round(|log eps| lambda_a area)` atoms `xi_a` and likewise for `xi_b`,
/// where `lambda_a xi_a + lambda_b xi_b` is the optimal decomposition of the
/// density; atoms are spread over the cell on the sample grid. The strain is
/// the superposition, which equals `|log eps|` times the Newtonian strain of
/// the density plus localized corrections around each atom.
pub fn gen_recovery_sequence(
    target: &RecoveryTarget,
    ladder: &[f64],
    domain: &Domain,
    relax: &Relaxation,
) -> Result<RecoverySequence> {
    check_cells(&target.cells, domain)?;
    if target.resolution == 0 {
        return Err(Error::pre("target resolution must be positive"));
    }
    let g = 1.0 / target.resolution as f64;
    let mut target_atoms = Vec::new();
    let mut plans = Vec::new();
    for cell in &target.cells {
        let samples = cell_samples(cell, g);
        if samples.is_empty() {
            return Err(Error::pre("a cell is smaller than the sample grid"));
        }
        let d = Vec2::from(cell.density);
        let area = (cell.hi[0] - cell.lo[0]) * (cell.hi[1] - cell.lo[1]);
        let w = d * (area / samples.len() as f64);
        if d != Vec2::zeros() {
            target_atoms.extend(samples.iter().map(|p| Atom::new(*p, w)));
        }
        let sol = relax.solve(d)?;
        let gens: Vec<(f64, Vec2)> = sol.decomposition.iter().map(|g| (g.lambda * area, g.xi)).collect();
        if gens.iter().any(|(l, _)| !l.is_finite() || *l < 0.0) {
            return Err(Error::pre("density is not lattice decomposable"));
        }
        plans.push((cell.clone(), samples, gens));
    }
    let mut entries = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::pre("eps must lie in (0, 1)"));
        }
        let le = eps.ln().abs();
        let mut atoms = Vec::new();
        for (cell, samples, gens) in &plans {
            let counts: Vec<usize> = gens.iter().map(|(l, _)| (le * l).round() as usize).collect();
            let total: usize = counts.iter().sum();
            if total > samples.len() {
                return Err(Error::pre("sample grid too coarse for the atom count"));
            }
            let pts = spread(samples, cell, total);
            let mut it = pts.into_iter();
            for ((_, xi), m) in gens.iter().zip(&counts) {
                for p in it.by_ref().take(*m) {
                    atoms.push(Atom::new(p, *xi));
                }
            }
        }
        let mu = DislocationMeasure::new(atoms);
        let beta = StrainField::superposition(&mu, eps)?;
        entries.push(RecoveryEntry { eps, mu, beta });
    }
    Ok(RecoverySequence { entries, target_atoms: DislocationMeasure::new(target_atoms), grid: g })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub eps: f64,
    pub log_eps: f64,
    pub n: usize,
    /// `|mu_k|(Omega) / |log eps_k|^2`.
    pub core_term: f64,
    /// Surrogate flat distance of `mu_k / |log eps_k|` to the sampled target.
    pub flat: f64,
    pub f_eps: f64,
    /// `f_eps` minus the limit value.
    pub overshoot: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
    /// `int phi(d mu / d|mu|) d|mu|` of the target.
    pub limit_self: f64,
    /// `int 1/2 C beta : beta` for the Newtonian strain of the target,
    /// evaluated from the sampled target with cores of half the sample
    /// spacing.
    pub limit_elastic: f64,
    pub limit_value: f64,
    pub core_decreasing: bool,
    pub flat_decreasing: bool,
    pub overshoot_shrinking: bool,
}

/// Counts, core term, flat distance and energy along a recovery sequence.
pub fn recovery_report(config: &ExperimentConfig) -> Result<RecoveryReport> {
    config.validate()?;
    let ExperimentKind::Recovery { target } = &config.experiment else {
        return Err(Error::Schema { key: "experiment".into(), msg: "expected a recovery experiment".into() });
    };
    let relax = relaxation_for(config)?;
    let seq = gen_recovery_sequence(target, &config.ladder, &config.domain, &relax)?;
    let limit_self: f64 = target
        .cells
        .iter()
        .map(|c| (c.hi[0] - c.lo[0]) * (c.hi[1] - c.lo[1]) * relax.phi(Vec2::from(c.density)))
        .sum();
    let target_field = StrainField::superposition(&seq.target_atoms, 0.5 * seq.grid)?;
    let limit_elastic = if seq.target_atoms.is_empty() {
        0.0
    } else {
        let mut o = QuadOptions::new(seq.grid / 8.0);
        o.h_max = config.resolution.h_max;
        let geo = field_geometry(&target_field, Outer::Polygon(&config.domain), &[], seq.grid);
        integrate(&geo, &o, |x| config.tensor.density(&target_field.eval(x)))?
    };
    let limit_value = limit_self + limit_elastic;
    let h = config.resolution.flat_h.min(seq.grid / 4.5);
    let pairs: Vec<(DislocationMeasure, f64)> = seq.entries.iter().map(|e| (e.mu.clone(), e.eps)).collect();
    let flat = flat_convergence_monitor(&pairs, &seq.target_atoms, &config.domain, &[h])?;
    let rows: Vec<RecoveryRow> = seq
        .entries
        .par_iter()
        .zip(flat.rows.par_iter())
        .map(|(e, f)| {
            let le = e.eps.ln().abs();
            let est = energy_f_eps(&e.mu, &e.beta, &config.domain, e.eps, &config.tensor, &config.resolution.quad(e.eps))?;
            Ok(RecoveryRow {
                eps: e.eps,
                log_eps: le,
                n: e.mu.len(),
                core_term: e.mu.total_variation() / (le * le),
                flat: f.value,
                f_eps: est.report.rescaled_total,
                overshoot: est.report.rescaled_total - limit_value,
            })
        })
        .collect::<Result<_>>()?;
    let core_decreasing = rows.windows(2).all(|w| w[1].core_term < w[0].core_term);
    let flat_decreasing = rows.windows(2).all(|w| w[1].flat < w[0].flat);
    let overshoot_shrinking = rows.windows(2).all(|w| w[1].overshoot.abs() < w[0].overshoot.abs());
    Ok(RecoveryReport { rows, limit_self, limit_elastic, limit_value, core_decreasing, flat_decreasing, overshoot_shrinking })
}

/// Output of `experiment run`, one variant per experiment kind.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExperimentOutput {
    EnergySweep(SweepReport),
    LiminfGap(GapReport),
    Compactness(CompactnessReport),
    Recovery(RecoveryReport),
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    Ok(match &config.experiment {
        ExperimentKind::EnergySweep => ExperimentOutput::EnergySweep(energy_scaling_sweep(config)?),
        ExperimentKind::LiminfGap { .. } => ExperimentOutput::LiminfGap(liminf_gap_report(config)?),
        ExperimentKind::Compactness => ExperimentOutput::Compactness(compactness_diagnostic(config)?),
        ExperimentKind::Recovery { .. } => ExperimentOutput::Recovery(recovery_report(config)?),
    })
}

impl ExperimentOutput {
    /// One CSV row per ladder point.
    pub fn csv(&self) -> Result<String> {
        match self {
            ExperimentOutput::EnergySweep(r) => crate::io::to_csv(&r.rows),
            ExperimentOutput::LiminfGap(r) => crate::io::to_csv(&r.rows),
            ExperimentOutput::Compactness(r) => crate::io::to_csv(&r.rows),
            ExperimentOutput::Recovery(r) => crate::io::to_csv(&r.rows),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ExperimentOutput::EnergySweep(r) => r.rows.len(),
            ExperimentOutput::LiminfGap(r) => r.rows.len(),
            ExperimentOutput::Compactness(r) => r.rows.len(),
            ExperimentOutput::Recovery(r) => r.rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Short human-readable account of the trend flags.
    pub fn summary(&self) -> String {
        match self {
            ExperimentOutput::EnergySweep(r) => format!(
                "energy sweep: {} rows, band ratio {:.3} (within band: {}), increasing: {}, log slope {:.3}",
                r.rows.len(),
                r.trend.band_ratio,
                r.trend.within_band,
                r.trend.increasing,
                r.trend.log_slope
            ),
            ExperimentOutput::LiminfGap(r) => {
                format!("liminf gap: {} rows, lower bound below measured energy: {}", r.rows.len(), r.bound_holds)
            }
            ExperimentOutput::Compactness(r) => format!(
                "compactness: {} rows, reduced bounded: {}, full growing: {}, min ratio {:.3e}",
                r.rows.len(),
                r.reduced_bounded,
                r.full_growing,
                r.min_ratio
            ),
            ExperimentOutput::Recovery(r) => format!(
                "recovery: {} rows, limit {:.4}, core decreasing: {}, flat decreasing: {}, overshoot shrinking: {}",
                r.rows.len(),
                r.limit_value,
                r.core_decreasing,
                r.flat_decreasing,
                r.overshoot_shrinking
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_the_regime() {
        let eps = 1e-3;
        assert_eq!(CountRule::Critical.count(eps), 7);
        assert_eq!(CountRule::Supercritical.count(eps), 48);
        assert_eq!(CountRule::Subcritical.count(eps), 3);
        assert_eq!(CountRule::Fixed(5).count(eps), 5);
    }

    #[test]
    fn fitted_skew_removes_constant() {
        // beta = skew_from(3) on unit area: int skew = 3, int |beta|^2 = 18
        let (w, r) = fitted(&[1.0, 3.0, 18.0, 0.0]);
        assert_eq!(w, 3.0);
        assert!(r.abs() < 1e-12);
    }
}
