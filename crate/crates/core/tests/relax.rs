use dislab::model::{Atom, BurgersLattice, DislocationMeasure};
use dislab::relax::{phi, PsiOracle, QuadraticPsi, Relaxation};
use dislab::Vec2;
use proptest::prelude::*;

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Pair scan: the cheapest way to write `xi` as a nonnegative combination of
/// at most two lattice vectors within `radius`.
fn brute_phi(xi: Vec2, lattice: &BurgersLattice, psi: &dyn PsiOracle, radius: f64) -> f64 {
    let gens = lattice.enumerate(radius).unwrap();
    let costs: Vec<f64> = gens.iter().map(|g| psi.psi(*g)).collect();
    let mut best = f64::INFINITY;
    for (i, a) in gens.iter().enumerate() {
        // xi parallel to a single generator
        if cross(*a, xi).abs() <= 1e-12 * a.norm() * xi.norm() && a.dot(&xi) > 0.0 {
            best = best.min(xi.norm() / a.norm() * costs[i]);
        }
        for (j, b) in gens.iter().enumerate().skip(i + 1) {
            let det = cross(*a, *b);
            if det.abs() < 1e-12 {
                continue;
            }
            let s = cross(xi, *b) / det;
            let t = cross(*a, xi) / det;
            if s >= -1e-14 && t >= -1e-14 {
                best = best.min(s.max(0.0) * costs[i] + t.max(0.0) * costs[j]);
            }
        }
    }
    best
}

fn iso_psi() -> QuadraticPsi {
    QuadraticPsi([[1.0, 0.0], [0.0, 1.0]])
}

/// Not quadratic: `|xi|^2 (1 + 0.4 cos 4 theta)`.
fn wavy(xi: Vec2) -> f64 {
    let r2 = xi.norm_squared();
    if r2 == 0.0 {
        return 0.0;
    }
    let c4 = (xi.x.powi(4) - 6.0 * xi.x * xi.x * xi.y * xi.y + xi.y.powi(4)) / (r2 * r2);
    r2 * (1.0 + 0.4 * c4)
}

#[test]
fn euclidean_psi_on_the_square_lattice_gives_the_l1_norm() {
    let rel = Relaxation::new(&BurgersLattice::square(), &iso_psi(), None).unwrap();
    for (m, n) in [(1i64, 0i64), (1, 1), (2, 1), (-3, 5), (7, -2)] {
        let xi = Vec2::new(m as f64, n as f64);
        assert!((rel.phi(xi) - (m.abs() + n.abs()) as f64).abs() < 1e-12);
    }
    let sol = rel.solve(Vec2::new(2.0, 1.0)).unwrap();
    assert_eq!(sol.decomposition.len(), 2);
    let recombined: Vec2 = sol.decomposition.iter().map(|g| g.xi * g.lambda).sum();
    assert!((recombined - Vec2::new(2.0, 1.0)).norm() < 1e-12);
}

#[test]
fn euclidean_psi_on_the_triangular_lattice_gives_the_hexagonal_norm() {
    let lat = BurgersLattice::triangular();
    let rel = Relaxation::new(&lat, &iso_psi(), None).unwrap();
    // b1 + b2 is a lattice vector of length sqrt 3 made of two unit steps
    let v = lat.combine(1, 1);
    assert!((v.norm() - 3f64.sqrt()).abs() < 1e-12);
    assert!((rel.phi(v) - 2.0).abs() < 1e-12);
    assert!((rel.phi(lat.combine(1, 0)) - 1.0).abs() < 1e-12);
    // on the unit circle the hexagonal norm ranges over [1, 2 / sqrt 3]
    let (lo, hi) = rel.unit_range(720);
    assert!((lo - 1.0).abs() < 1e-12);
    assert!((hi - 2.0 / 3f64.sqrt()).abs() < 1e-4);
}

#[test]
fn relaxed_integral_sums_over_atoms() {
    let rel = Relaxation::new(&BurgersLattice::square(), &iso_psi(), None).unwrap();
    let mu = DislocationMeasure::new(vec![
        Atom::new(Vec2::new(0.1, 0.1), Vec2::new(1.0, 1.0)),
        Atom::new(Vec2::new(0.5, 0.1), Vec2::new(0.0, -3.0)),
        Atom::new(Vec2::new(0.9, 0.1), Vec2::zeros()),
    ]);
    assert!((rel.relaxed_integral(&mu) - 5.0).abs() < 1e-12);
}

#[test]
fn radius_below_the_automatic_bound_is_rejected() {
    let rel = Relaxation::new(&BurgersLattice::square(), &iso_psi(), None).unwrap();
    assert!(Relaxation::new(&BurgersLattice::square(), &iso_psi(), Some(0.5 * rel.auto_radius)).is_err());
    let degenerate = QuadraticPsi([[1.0, 0.0], [0.0, 0.0]]);
    assert!(Relaxation::new(&BurgersLattice::square(), &degenerate, None).is_err());
}

proptest! {
    #[test]
    fn hull_matches_the_pair_scan(
        q in (0.3..3.0f64, -0.5..0.5f64, 0.3..3.0f64),
        m in -8i64..=8,
        n in -8i64..=8,
        triangular in any::<bool>(),
    ) {
        prop_assume!(m != 0 || n != 0);
        let lat = if triangular { BurgersLattice::triangular() } else { BurgersLattice::square() };
        let psi = QuadraticPsi([[q.0, q.1], [q.1, q.2]]);
        prop_assume!(q.0 * q.2 - q.1 * q.1 > 0.05);
        let rel = Relaxation::new(&lat, &psi, None).unwrap();
        let xi = lat.combine(m, n);
        let want = brute_phi(xi, &lat, &psi, 1.5 * rel.auto_radius);
        prop_assert!((rel.phi(xi) - want).abs() <= 1e-10 * want, "{} vs {want}", rel.phi(xi));
    }

    #[test]
    fn non_quadratic_psi_matches_the_pair_scan(m in -6i64..=6, n in -6i64..=6) {
        prop_assume!(m != 0 || n != 0);
        let lat = BurgersLattice::square();
        let sol = phi(lat.combine(m, n), &lat, &wavy, None).unwrap();
        let want = brute_phi(lat.combine(m, n), &lat, &wavy, 1.5 * sol.generator_radius);
        prop_assert!((sol.value - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn phi_is_a_convex_one_homogeneous_minorant(
        a in (-9i64..=9, -9i64..=9),
        b in (-9i64..=9, -9i64..=9),
        k in 1i64..6,
    ) {
        let lat = BurgersLattice::triangular();
        let psi = QuadraticPsi([[1.3, 0.2], [0.2, 0.7]]);
        let rel = Relaxation::new(&lat, &psi, None).unwrap();
        let (a, b) = (lat.combine(a.0, a.1), lat.combine(b.0, b.1));
        let (pa, pb) = (rel.phi(a), rel.phi(b));
        prop_assert!(rel.phi(a + b) <= pa + pb + 1e-12 * (pa + pb));
        prop_assert!((rel.phi(a * k as f64) - k as f64 * pa).abs() <= 1e-12 * k as f64 * pa.max(1.0));
        prop_assert!(pa <= psi.psi(a) * (1.0 + 1e-12));
        prop_assert!((rel.phi(-a) - pa).abs() <= 1e-12 * pa.max(1.0));
    }
}
