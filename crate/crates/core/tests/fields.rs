use dislab::fields::{
    annulus_energy, annulus_l2, boundary_mass_k, circulation, energy_f_eps, KField, QuadOptions, StrainField,
};
use dislab::geom::gauss_on;
use dislab::model::{Atom, DislocationMeasure, Domain, ElasticTensor};
use dislab::{Mat2, Vec2};
use proptest::prelude::*;

const TAU: f64 = std::f64::consts::TAU;

/// Rectangle loop `[lo, hi]` with `n` points per side.
fn rect_loop(lo: Vec2, hi: Vec2, n: usize) -> Vec<Vec2> {
    let corners = [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
    let mut out = Vec::new();
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        for j in 0..n {
            out.push(a + (b - a) * (j as f64 / n as f64));
        }
    }
    out
}

/// Elastic energy of one K-field centred in the unit square outside
/// `B_eps`: the density is `A(theta) / r^2`, so the radial integral is
/// `A(theta) log(r_max(theta) / eps)` and only an angular quadrature is left.
fn centred_square_energy(xi: Vec2, eps: f64, c: &ElasticTensor) -> f64 {
    let k = KField::new(xi, Vec2::zeros());
    let mut total = 0.0;
    for q in 0..8 {
        let (a, b) = (q as f64 * TAU / 8.0, (q + 1) as f64 * TAU / 8.0);
        for (t, w) in gauss_on(a, b, 24) {
            let dir = Vec2::new(t.cos(), t.sin());
            let amp = c.density(&k.eval_unchecked(dir));
            let r_max = 0.5 / t.cos().abs().max(t.sin().abs());
            total += w * amp * (r_max / eps).ln();
        }
    }
    total
}

#[test]
fn energy_of_a_centred_atom_matches_the_polar_reference() {
    let dom = Domain::rectangle(Vec2::new(-0.5, -0.5), Vec2::new(0.5, 0.5)).unwrap();
    let c = ElasticTensor::isotropic(0.7, 1.3).unwrap();
    let xi = Vec2::new(1.0, 0.0);
    let eps = 1e-3;
    let mu = DislocationMeasure::new(vec![Atom::new(Vec2::zeros(), xi)]);
    let beta = StrainField::superposition(&mu, eps).unwrap();
    let est = energy_f_eps(&mu, &beta, &dom, eps, &c, &QuadOptions::new(eps / 8.0)).unwrap();
    let want = centred_square_energy(xi, eps, &c);
    let rel = (est.report.elastic - want).abs() / want;
    assert!(rel < 2e-3, "{} vs {want} ({rel:.2e})", est.report.elastic);
    assert_eq!(est.report.core, 1.0);
    let le = eps.ln();
    assert!((est.report.rescaled_total - (est.report.elastic + 1.0) / (le * le)).abs() < 1e-15);
}

#[test]
fn isotropic_annulus_energy_has_the_unrelaxed_slope() {
    // with K = xi (x) (sin, -cos) / (2 pi r), the angular mean of the
    // isotropic density is (lambda + 3 mu) |xi|^2 / (16 pi^2 r^2)
    for (lambda, mu) in [(1.0, 1.0), (0.7, 1.3), (0.0, 2.0)] {
        let c = ElasticTensor::isotropic(lambda, mu).unwrap();
        let k = KField::new(Vec2::new(0.6, -0.8), Vec2::new(0.1, 0.2));
        let e = annulus_energy(k.center, 0.01, 1.0, 128, &c, |x| k.eval_unchecked(x));
        let want = (lambda + 3.0 * mu) / (4.0 * TAU) * 100f64.ln();
        assert!((e - want).abs() < 1e-10 * want, "{e} vs {want}");
    }
}

#[test]
fn boundary_mass_is_the_burgers_length() {
    let k = KField::new(Vec2::new(3.0, 4.0), Vec2::new(-1.0, 2.0));
    for r in [1e-4, 0.3, 7.0] {
        assert!((boundary_mass_k(&k, k.center, r, 64).unwrap() - 5.0).abs() < 1e-12);
    }
    assert!(boundary_mass_k(&k, Vec2::zeros(), 1.0, 64).is_err());
}

#[test]
fn background_contributes_nothing_to_circulation() {
    let mu = DislocationMeasure::new(vec![Atom::new(Vec2::new(0.5, 0.5), Vec2::new(0.0, 1.0))]);
    let f = StrainField::superposition(&mu, 1e-3).unwrap().with_background(Mat2::new(0.3, -1.0, 2.0, 0.5));
    let c = circulation(&f, &rect_loop(Vec2::new(0.1, 0.2), Vec2::new(0.9, 0.7), 200), 8).unwrap();
    assert!((c - Vec2::new(0.0, 1.0)).norm() < 1e-9);
}

#[test]
fn cores_are_zeroed_and_loops_through_them_rejected() {
    let mu = DislocationMeasure::new(vec![Atom::new(Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.0))]);
    let f = StrainField::superposition(&mu, 0.01).unwrap();
    assert_eq!(f.eval(Vec2::new(0.505, 0.5)), Mat2::zeros());
    assert!(f.eval(Vec2::new(0.52, 0.5)).norm() > 0.0);
    let lp = rect_loop(Vec2::new(0.505, 0.2), Vec2::new(0.9, 0.8), 50);
    assert!(circulation(&f, &lp, 4).is_err());
}

proptest! {
    #[test]
    fn circulation_counts_enclosed_burgers_vectors(
        atoms in prop::collection::vec((0.05..0.95f64, 0.05..0.95f64, -2i32..=2, -2i32..=2), 1..8),
        lo in (0.0..0.45f64, 0.0..0.45f64),
        hi in (0.55..1.0f64, 0.55..1.0f64),
    ) {
        let (lo, hi) = (Vec2::new(lo.0, lo.1), Vec2::new(hi.0, hi.1));
        // keep atoms clear of the loop so the edge quadrature stays accurate
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(x, y, a, b)| Atom::new(Vec2::new(x, y), Vec2::new(a as f64, b as f64)))
            .filter(|a| {
                let p = a.x;
                [(p.x - lo.x).abs(), (p.x - hi.x).abs(), (p.y - lo.y).abs(), (p.y - hi.y).abs()]
                    .iter()
                    .all(|d| *d > 0.03)
            })
            .collect();
        let mu = DislocationMeasure::new(atoms);
        let f = StrainField::superposition(&mu, 1e-3).unwrap();
        let got = circulation(&f, &rect_loop(lo, hi, 400), 12).unwrap();
        let inside = mu.mass_where(|p| p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y);
        prop_assert!((got - inside).norm() < 1e-6, "{got:?} vs {inside:?}");
    }

    #[test]
    fn k_energy_is_logarithmic(xi in (-3.0..3.0f64, -3.0..3.0f64), r1 in 1e-4..0.5f64, ratio in 1.5..1e3f64) {
        let xi = Vec2::new(xi.0, xi.1);
        let k = KField::new(xi, Vec2::new(0.3, -0.7));
        let l2 = annulus_l2(k.center, r1, r1 * ratio, 64, |x| k.eval_unchecked(x));
        let want = xi.norm_squared() * ratio.ln() / TAU;
        prop_assert!((l2 - want).abs() <= 1e-10 * want.max(1e-12));
    }
}
