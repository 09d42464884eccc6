//! Domains, Burgers lattices, dislocation measures, elastic tensors and the
//! bookkeeping of the regularized energy.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat2, Vec2};

/// Absolute tolerance on lattice coefficients.
pub const LATTICE_TOL: f64 = 1e-9;

/// Default cap on the number of enumerated lattice vectors.
pub const DEFAULT_ENUM_CAP: usize = 2_000_000;

/// Two linearly independent Burgers vectors generating the lattice of
/// admissible circulations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeJson", into = "LatticeJson")]
pub struct BurgersLattice {
    b1: Vec2,
    b2: Vec2,
    min_len: f64,
}

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    b1: [f64; 2],
    b2: [f64; 2],
}

impl TryFrom<LatticeJson> for BurgersLattice {
    type Error = Error;
    fn try_from(j: LatticeJson) -> Result<Self> {
        BurgersLattice::new(Vec2::from(j.b1), Vec2::from(j.b2))
    }
}

impl From<BurgersLattice> for LatticeJson {
    fn from(l: BurgersLattice) -> Self {
        LatticeJson { b1: l.b1.into(), b2: l.b2.into() }
    }
}

impl BurgersLattice {
    pub fn new(b1: Vec2, b2: Vec2) -> Result<Self> {
        let det = b1.perp(&b2);
        let scale = b1.norm() * b2.norm();
        if !(det.abs() > 1e-12 * scale) || !det.is_finite() {
            return Err(Error::pre("lattice basis is degenerate"));
        }
        let min_len = shortest_vector(b1, b2).norm();
        Ok(BurgersLattice { b1, b2, min_len })
    }

    /// Unit square lattice `b1 = (1,0)`, `b2 = (0,1)`.
    pub fn square() -> Self {
        Self::new(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).expect("valid basis")
    }

    /// Triangular lattice with unit nearest-neighbour distance.
    pub fn triangular() -> Self {
        Self::new(Vec2::new(1.0, 0.0), Vec2::new(0.5, 0.75f64.sqrt())).expect("valid basis")
    }

    pub fn b1(&self) -> Vec2 {
        self.b1
    }

    pub fn b2(&self) -> Vec2 {
        self.b2
    }

    /// Length of the shortest nonzero lattice vector.
    pub fn min_length(&self) -> f64 {
        self.min_len
    }

    pub fn max_basis_length(&self) -> f64 {
        self.b1.norm().max(self.b2.norm())
    }

    pub fn combine(&self, m: i64, n: i64) -> Vec2 {
        self.b1 * m as f64 + self.b2 * n as f64
    }

    fn coefficients(&self, xi: Vec2) -> (f64, f64) {
        let det = self.b1.perp(&self.b2);
        (xi.perp(&self.b2) / det, self.b1.perp(&xi) / det)
    }

    /// Integer coordinates of `xi`, or `None` when `xi` is not a lattice vector.
    pub fn decompose(&self, xi: Vec2) -> Option<(i64, i64)> {
        let (a, b) = self.coefficients(xi);
        let (m, n) = (a.round(), b.round());
        if (a - m).abs() <= LATTICE_TOL && (b - n).abs() <= LATTICE_TOL {
            Some((m as i64, n as i64))
        } else {
            None
        }
    }

    pub fn contains(&self, xi: Vec2) -> bool {
        self.decompose(xi).is_some()
    }

    /// All nonzero lattice vectors with `|xi| <= radius`, ordered
    /// lexicographically by their integer coordinates.
    pub fn enumerate(&self, radius: f64) -> Result<Vec<Vec2>> {
        self.enumerate_capped(radius, DEFAULT_ENUM_CAP)
    }

    pub fn enumerate_capped(&self, radius: f64, cap: usize) -> Result<Vec<Vec2>> {
        if !(radius >= 0.0) {
            return Err(Error::pre("enumeration radius must be nonnegative"));
        }
        let det = self.b1.perp(&self.b2).abs();
        // |m| = |xi x b2| / det <= radius |b2| / det, likewise for n.
        let mmax = (radius * self.b2.norm() / det + 1e-9).floor() as i64;
        let nmax = (radius * self.b1.norm() / det + 1e-9).floor() as i64;
        let box_count = (2 * mmax + 1) as f64 * (2 * nmax + 1) as f64;
        let area_estimate = std::f64::consts::PI * radius * radius / det;
        if area_estimate.min(box_count) > cap as f64 {
            return Err(Error::Resource(format!(
                "lattice enumeration of radius {radius} exceeds cap {cap}"
            )));
        }
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut out = Vec::new();
        for m in -mmax..=mmax {
            for n in -nmax..=nmax {
                if m == 0 && n == 0 {
                    continue;
                }
                let v = self.combine(m, n);
                if v.norm_squared() <= r2 {
                    out.push(v);
                    if out.len() > cap {
                        return Err(Error::Resource(format!(
                            "lattice enumeration of radius {radius} exceeds cap {cap}"
                        )));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Lagrange-Gauss reduction; returns a shortest nonzero vector of the lattice.
fn shortest_vector(mut u: Vec2, mut v: Vec2) -> Vec2 {
    if u.norm_squared() > v.norm_squared() {
        std::mem::swap(&mut u, &mut v);
    }
    loop {
        let mu = (u.dot(&v) / u.norm_squared()).round();
        v -= u * mu;
        if v.norm_squared() >= u.norm_squared() {
            return u;
        }
        std::mem::swap(&mut u, &mut v);
    }
}

/// One dislocation: position and Burgers vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "AtomJson", into = "AtomJson")]
pub struct Atom {
    pub x: Vec2,
    pub xi: Vec2,
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    x: [f64; 2],
    xi: [f64; 2],
}

impl From<AtomJson> for Atom {
    fn from(a: AtomJson) -> Self {
        Atom { x: Vec2::from(a.x), xi: Vec2::from(a.xi) }
    }
}

impl From<Atom> for AtomJson {
    fn from(a: Atom) -> Self {
        AtomJson { x: a.x.into(), xi: a.xi.into() }
    }
}

impl Atom {
    pub fn new(x: Vec2, xi: Vec2) -> Self {
        Atom { x, xi }
    }
}

/// Finite sum of weighted Dirac masses `sum_i xi_i delta_{x_i}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DislocationMeasure {
    pub atoms: Vec<Atom>,
}

impl DislocationMeasure {
    pub fn new(atoms: Vec<Atom>) -> Self {
        DislocationMeasure { atoms }
    }

    /// Checks lattice membership, nonzero weights and interior positions.
    pub fn validate(&self, lattice: &BurgersLattice, domain: &Domain) -> Result<()> {
        for (i, a) in self.atoms.iter().enumerate() {
            if a.xi.norm() == 0.0 || !lattice.contains(a.xi) {
                return Err(Error::Schema {
                    key: format!("atoms[{i}].xi"),
                    msg: "Burgers vector must be a nonzero lattice vector".into(),
                });
            }
            if !domain.contains_strict(a.x) {
                return Err(Error::Schema {
                    key: format!("atoms[{i}].x"),
                    msg: "dislocation must lie strictly inside the domain".into(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `|mu|(R^2) = sum_i |xi_i|`.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.xi.norm()).sum()
    }

    /// `mu(R^2) = sum_i xi_i`.
    pub fn total_mass(&self) -> Vec2 {
        self.atoms.iter().fold(Vec2::zeros(), |s, a| s + a.xi)
    }

    /// Mass of the atoms selected by `pred`.
    pub fn mass_where(&self, pred: impl Fn(Vec2) -> bool) -> Vec2 {
        self.atoms
            .iter()
            .filter(|a| pred(a.x))
            .fold(Vec2::zeros(), |s, a| s + a.xi)
    }

    pub fn union(&self, other: &DislocationMeasure) -> DislocationMeasure {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        DislocationMeasure { atoms }
    }

    pub fn scaled(&self, s: f64) -> DislocationMeasure {
        DislocationMeasure {
            atoms: self.atoms.iter().map(|a| Atom::new(a.x, a.xi * s)).collect(),
        }
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.atoms.iter().map(|a| a.x).collect()
    }

    /// Smallest pairwise distance between atom positions.
    pub fn min_pair_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for i in 0..self.atoms.len() {
            for j in i + 1..self.atoms.len() {
                d = d.min((self.atoms[i].x - self.atoms[j].x).norm());
            }
        }
        d
    }
}

/// Simple, positively oriented polygon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainJson", into = "DomainJson")]
pub struct Domain {
    vertices: Vec<Vec2>,
    lo: Vec2,
    hi: Vec2,
}

#[derive(Serialize, Deserialize)]
struct DomainJson {
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<DomainJson> for Domain {
    type Error = Error;
    fn try_from(j: DomainJson) -> Result<Self> {
        Domain::polygon(j.vertices.into_iter().map(Vec2::from).collect())
    }
}

impl From<Domain> for DomainJson {
    fn from(d: Domain) -> Self {
        DomainJson { vertices: d.vertices.iter().map(|v| (*v).into()).collect() }
    }
}

impl Domain {
    /// Builds a polygon domain; clockwise input is reoriented.
    pub fn polygon(mut vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Schema {
                key: "vertices".into(),
                msg: "a polygon needs at least three vertices".into(),
            });
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::Schema { key: "vertices".into(), msg: "non-finite vertex".into() });
        }
        let area = geom::signed_area(&vertices);
        if area == 0.0 {
            return Err(Error::Schema { key: "vertices".into(), msg: "zero-area polygon".into() });
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if geom::segments_intersect(
                    vertices[i],
                    vertices[(i + 1) % n],
                    vertices[j],
                    vertices[(j + 1) % n],
                ) {
                    return Err(Error::Schema {
                        key: "vertices".into(),
                        msg: format!("edges {i} and {j} intersect"),
                    });
                }
            }
        }
        let lo = vertices.iter().fold(Vec2::repeat(f64::INFINITY), |m, v| m.inf(v));
        let hi = vertices.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |m, v| m.sup(v));
        Ok(Domain { vertices, lo, hi })
    }

    pub fn rectangle(lo: Vec2, hi: Vec2) -> Result<Self> {
        Self::polygon(vec![lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(Vec2::zeros(), Vec2::new(1.0, 1.0)).expect("valid square")
    }

    /// Regular `n`-gon inscribed in the circle of the given radius.
    pub fn regular_polygon(center: Vec2, radius: f64, n: usize) -> Result<Self> {
        let v = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                center + Vec2::new(t.cos(), t.sin()) * radius
            })
            .collect();
        Self::polygon(v)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        (self.lo, self.hi)
    }

    pub fn area(&self) -> f64 {
        geom::signed_area(&self.vertices)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        geom::point_in_polygon(&self.vertices, p)
    }

    pub fn contains_strict(&self, p: Vec2) -> bool {
        self.contains(p) && self.dist_to_boundary(p) > 0.0
    }

    pub fn dist_to_boundary(&self, p: Vec2) -> f64 {
        geom::dist_to_polygon_boundary(&self.vertices, p)
    }

    /// Whether the closed segment `[a, b]` stays inside the domain.
    pub fn segment_inside(&self, a: Vec2, b: Vec2) -> bool {
        if !self.contains(a) || !self.contains(b) {
            return false;
        }
        let n = self.vertices.len();
        !(0..n).any(|i| {
            geom::segments_intersect(a, b, self.vertices[i], self.vertices[(i + 1) % n])
        })
    }
}

/// Elastic tensor acting on symmetric matrices only.
///
/// The quadratic form is stored as a symmetric 3x3 matrix `M` in the
/// orthonormal basis `(e11, e22, sqrt2 e12)` of symmetric matrices, so that
/// `CF:F = v(F_sym)^T M v(F_sym)` and `l, L` are the extreme eigenvalues of `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorJson", into = "TensorJson")]
pub struct ElasticTensor {
    kind: TensorKind,
    m: Matrix3<f64>,
    l: f64,
    big_l: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorKind {
    Isotropic { lambda: f64, mu: f64 },
    General,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TensorJson {
    Isotropic { lambda: f64, mu: f64 },
    General { c: [[[[f64; 2]; 2]; 2]; 2] },
}

impl TryFrom<TensorJson> for ElasticTensor {
    type Error = Error;
    fn try_from(j: TensorJson) -> Result<Self> {
        match j {
            TensorJson::Isotropic { lambda, mu } => ElasticTensor::isotropic(lambda, mu),
            TensorJson::General { c } => ElasticTensor::general(c),
        }
    }
}

impl From<ElasticTensor> for TensorJson {
    fn from(t: ElasticTensor) -> Self {
        match t.kind {
            TensorKind::Isotropic { lambda, mu } => TensorJson::Isotropic { lambda, mu },
            TensorKind::General => TensorJson::General { c: t.coefficients() },
        }
    }
}

#[inline]
fn voigt(f: &Mat2) -> Vector3<f64> {
    Vector3::new(f[(0, 0)], f[(1, 1)], std::f64::consts::SQRT_2 * 0.5 * (f[(0, 1)] + f[(1, 0)]))
}

fn basis_matrix(k: usize) -> Mat2 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match k {
        0 => Mat2::new(1.0, 0.0, 0.0, 0.0),
        1 => Mat2::new(0.0, 0.0, 0.0, 1.0),
        _ => Mat2::new(0.0, s, s, 0.0),
    }
}

impl ElasticTensor {
    /// `CF:F = 2 mu |F_sym|^2 + lambda tr(F)^2`.
    pub fn isotropic(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !(lambda + mu > 0.0) {
            return Err(Error::Schema {
                key: "mu".into(),
                msg: "isotropic tensor needs mu > 0 and lambda + mu > 0".into(),
            });
        }
        let one = Vector3::new(1.0, 1.0, 0.0);
        let m = Matrix3::identity() * (2.0 * mu) + one * one.transpose() * lambda;
        Self::from_matrix(TensorKind::Isotropic { lambda, mu }, m)
    }

    /// General tensor from its 2x2x2x2 coefficients `C_ijkl`; only the action
    /// on symmetric matrices is retained.
    pub fn general(c: [[[[f64; 2]; 2]; 2]; 2]) -> Result<Self> {
        let apply = |f: &Mat2| -> Mat2 {
            let mut out = Mat2::zeros();
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for k in 0..2 {
                        for l in 0..2 {
                            s += c[i][j][k][l] * f[(k, l)];
                        }
                    }
                    out[(i, j)] = s;
                }
            }
            out
        };
        let mut m = Matrix3::zeros();
        for a in 0..3 {
            for b in 0..3 {
                let ea = basis_matrix(a);
                let eb = basis_matrix(b);
                m[(a, b)] = 0.5 * (geom::ddot(&apply(&eb), &ea) + geom::ddot(&apply(&ea), &eb));
            }
        }
        Self::from_matrix(TensorKind::General, m)
    }

    /// General tensor given directly by its matrix on symmetric matrices.
    pub fn from_sym_matrix(m: Matrix3<f64>) -> Result<Self> {
        Self::from_matrix(TensorKind::General, (m + m.transpose()) * 0.5)
    }

    fn from_matrix(kind: TensorKind, m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema { key: "c".into(), msg: "non-finite coefficient".into() });
        }
        let eig = SymmetricEigen::new(m);
        let l = eig.eigenvalues.min();
        let big_l = eig.eigenvalues.max();
        if !(l > 0.0) {
            return Err(Error::Schema {
                key: "c".into(),
                msg: "tensor is not positive definite on symmetric matrices".into(),
            });
        }
        Ok(ElasticTensor { kind, m, l, big_l })
    }

    pub fn kind(&self) -> &TensorKind {
        &self.kind
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.kind, TensorKind::Isotropic { .. })
    }

    pub fn sym_matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Lower bound `l` with `l |F_sym|^2 <= CF:F`.
    pub fn lower(&self) -> f64 {
        self.l
    }

    /// Upper bound `L` with `CF:F <= L |F_sym|^2`.
    pub fn upper(&self) -> f64 {
        self.big_l
    }

    /// `CF:F`.
    #[inline]
    pub fn form(&self, f: &Mat2) -> f64 {
        match self.kind {
            TensorKind::Isotropic { lambda, mu } => {
                let s01 = 0.5 * (f[(0, 1)] + f[(1, 0)]);
                let tr = f[(0, 0)] + f[(1, 1)];
                2.0 * mu * (f[(0, 0)] * f[(0, 0)] + f[(1, 1)] * f[(1, 1)] + 2.0 * s01 * s01)
                    + lambda * tr * tr
            }
            TensorKind::General => {
                let v = voigt(f);
                v.dot(&(self.m * v))
            }
        }
    }

    /// Bilinear form `CF:G`.
    #[inline]
    pub fn bilinear(&self, f: &Mat2, g: &Mat2) -> f64 {
        voigt(f).dot(&(self.m * voigt(g)))
    }

    /// Stored energy density `1/2 CF:F`.
    #[inline]
    pub fn density(&self, f: &Mat2) -> f64 {
        0.5 * self.form(f)
    }

    /// `CF` as a symmetric matrix.
    pub fn apply(&self, f: &Mat2) -> Mat2 {
        let w = self.m * voigt(f);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Mat2::new(w[0], s * w[2], s * w[2], w[1])
    }

    /// Full coefficient array `C_ijkl` with minor and major symmetries.
    pub fn coefficients(&self) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut c = [[[[0.0; 2]; 2]; 2]; 2];
        for k in 0..2 {
            for l in 0..2 {
                let mut e = Mat2::zeros();
                e[(k, l)] = 1.0;
                let ce = self.apply(&e);
                for i in 0..2 {
                    for j in 0..2 {
                        c[i][j][k][l] = ce[(i, j)];
                    }
                }
            }
        }
        c
    }
}

/// Decomposition of the regularized energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `int 1/2 C beta : beta` over the reduced domain.
    pub elastic: f64,
    /// `|mu|(Omega)`.
    pub core: f64,
    pub eps: f64,
    /// `(elastic + core) / |log eps|^2`.
    pub rescaled_total: f64,
}

impl EnergyReport {
    pub fn new(elastic: f64, core: f64, eps: f64) -> Self {
        let le = eps.ln().abs();
        EnergyReport { elastic, core, eps, rescaled_total: (elastic + core) / (le * le) }
    }

    pub fn log_eps(&self) -> f64 {
        self.eps.ln().abs()
    }

    pub fn rescaled_elastic(&self) -> f64 {
        self.elastic / (self.log_eps() * self.log_eps())
    }

    pub fn rescaled_core(&self) -> f64 {
        self.core / (self.log_eps() * self.log_eps())
    }
}

/// Membership predicate for `Omega_r(mu) = Omega \ union_i B_r(x_i)`.
#[derive(Clone, Debug)]
pub struct ReducedDomain<'a> {
    pub domain: &'a Domain,
    pub centers: Vec<Vec2>,
    pub radius: f64,
}

impl<'a> ReducedDomain<'a> {
    pub fn new(domain: &'a Domain, mu: &DislocationMeasure, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::pre("core radius must be positive"));
        }
        Ok(ReducedDomain { domain, centers: mu.positions(), radius: r })
    }

    pub fn in_core(&self, p: Vec2) -> bool {
        let r2 = self.radius * self.radius;
        self.centers.iter().any(|c| (p - c).norm_squared() < r2)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.domain.contains(p) && !self.in_core(p)
    }

    /// Number of connected components of the reduced domain, by 4-neighbour
    /// flood fill on a grid of spacing `h`.
    pub fn components(&self, h: f64) -> usize {
        let (lo, hi) = self.domain.bbox();
        grid_components(lo, hi, h, |p| self.contains(p))
    }

    pub fn is_connected(&self, h: f64) -> bool {
        self.components(h) == 1
    }
}

/// Connected components of `{p : inside(p)}` in the box `[lo, hi]`, by
/// 4-neighbour flood fill on a grid of spacing `h`.
pub fn grid_components(lo: Vec2, hi: Vec2, h: f64, inside: impl Fn(Vec2) -> bool) -> usize {
    let nx = ((hi.x - lo.x) / h).ceil() as usize + 1;
    let ny = ((hi.y - lo.y) / h).ceil() as usize + 1;
    let idx = |i: usize, j: usize| j * nx + i;
    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            mask[idx(i, j)] = inside(lo + Vec2::new(i as f64 * h, j as f64 * h));
        }
    }
    let mut label = vec![false; nx * ny];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if !mask[start] || label[start] {
            continue;
        }
        label[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            let mut push = |ii: usize, jj: usize| {
                let q = idx(ii, jj);
                if mask[q] && !label[q] {
                    label[q] = true;
                    stack.push(q);
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if i + 1 < nx {
                push(i + 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if j + 1 < ny {
                push(i, j + 1);
            }
        }
        count += 1;
    }
    count
}
