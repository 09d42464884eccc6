use dislab::annulus::oracle::{isotropic_slope, radial_mode_value};
use dislab::annulus::{
    harmonic_gradient_extension, korn_constant_estimate, korn_discretization, psi_delta, psi_form, AnnulusProblem,
    Discretization, ExtensionOptions, PsiLimit, solve_psi_annulus,
};
use dislab::model::ElasticTensor;
use dislab::{Mat2, Vec2};
use proptest::prelude::*;

fn fixed(n_theta: usize, n_radial: usize) -> Discretization {
    Discretization { n_theta, per_unit_s: 1.0, min_radial: 1, n_radial: Some(n_radial) }
}

#[test]
fn nested_refinement_lowers_the_energy() {
    let c = ElasticTensor::isotropic(0.5, 1.0).unwrap();
    let xi = Vec2::new(0.8, 0.3);
    let vals: Vec<f64> =
        [(16, 12), (32, 24), (64, 48), (128, 96)].iter().map(|&(t, r)| psi_delta(xi, 0.01, &c, &fixed(t, r)).unwrap()).collect();
    for w in vals.windows(2) {
        assert!(w[1] < w[0], "{vals:?}");
    }
    // successive differences shrink
    assert!(vals[2] - vals[3] < vals[1] - vals[2]);
}

#[test]
fn relaxed_energy_lies_below_the_bare_field() {
    // u = 0 is admissible, so psi never exceeds the energy of K itself,
    // (lambda + 3 mu) |xi|^2 |log delta| / (8 pi) for isotropic C
    for (lambda, mu) in [(0.0, 1.0), (2.0, 0.5)] {
        let c = ElasticTensor::isotropic(lambda, mu).unwrap();
        let bare = (lambda + 3.0 * mu) / (8.0 * std::f64::consts::PI) * 1e3f64.ln();
        let v = psi_delta(Vec2::new(1.0, 0.0), 1e-3, &c, &Discretization::default()).unwrap();
        assert!(v < bare, "{v} vs {bare}");
    }
}

#[test]
fn fem_approaches_the_radial_reference() {
    let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
    let reference = radial_mode_value(1.0, 1.0, 1e-2, 800).unwrap();
    let e1 = Vec2::new(1.0, 0.0);
    let coarse = psi_delta(e1, 1e-2, &c, &Discretization::coarse()).unwrap();
    let default = psi_delta(e1, 1e-2, &c, &Discretization::default()).unwrap();
    let refined = psi_delta(e1, 1e-2, &c, &Discretization::default().refined()).unwrap();
    let err = |v: f64| (v - reference).abs() / reference;
    assert!(err(refined) < err(default) && err(default) < err(coarse));
    assert!(err(refined) < 5e-3);
    // the reference itself is converged in its own resolution
    let finer = radial_mode_value(1.0, 1.0, 1e-2, 1600).unwrap();
    assert!((finer - reference).abs() < 1e-6 * reference);
}

#[test]
fn isotropic_slope_is_recovered() {
    let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
    let lim = PsiLimit::compute(&c, &[1e-2, 1e-3, 1e-4], &Discretization::default()).unwrap();
    let want = isotropic_slope(1.0, 1.0);
    // 1 / (3 pi) at lambda = mu = 1
    assert!((want - 1.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-15);
    for th in [0.0, 0.7, 2.0] {
        let xi = Vec2::new(f64::cos(th), f64::sin(th));
        assert!((lim.value(xi) - want).abs() < 0.01 * want, "{} vs {want}", lim.value(xi));
    }
}

#[test]
fn thin_annuli_have_larger_korn_constants() {
    let disc = korn_discretization();
    let thin = korn_constant_estimate(1.1, &disc).unwrap();
    let thick = korn_constant_estimate(4.0, &disc).unwrap();
    assert!(thin.estimate > thick.estimate, "{} vs {}", thin.estimate, thick.estimate);
    assert!(thick.estimate >= 1.0);
    assert!(thin.upper.is_none());
    assert!(korn_constant_estimate(1.0, &disc).is_err());
}

#[test]
fn extension_reproduces_a_harmonic_gradient() {
    // v = (Re z^2, Im z^3) about the centre plus a skew part
    let center = Vec2::new(0.3, -0.2);
    let w = 0.4;
    let f = move |x: Vec2| {
        let (a, b) = (x.x - center.x, x.y - center.y);
        let g1 = [2.0 * a, -2.0 * b];
        let g2 = [6.0 * a * b, 3.0 * a * a - 3.0 * b * b];
        Mat2::new(g1[0], g1[1] - w, g2[0] + w, g2[1])
    };
    let res = harmonic_gradient_extension(&f, center, 0.1, 0.5, &ExtensionOptions::default()).unwrap();
    assert!(res.circulation.norm() < 1e-10);
    for p in [Vec2::new(0.0, 0.0), Vec2::new(0.05, 0.1), Vec2::new(-0.15, 0.02)] {
        let x = center + p;
        assert!((res.extension.strain(x) - f(x)).norm() < 1e-8);
    }
    // the deviation from the skew part, integrated over the annulus, is the
    // energy of grad v there
    assert!(res.deviation > 0.0 && res.c_ext > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn form_is_positive_and_homogeneous(
        lambda in 0.0..3.0f64,
        mu in 0.2..2.0f64,
        delta in 1e-3..0.5f64,
        xi in (-2.0..2.0f64, -2.0..2.0f64),
        t in 0.1..10.0f64,
    ) {
        let c = ElasticTensor::isotropic(lambda, mu).unwrap();
        let disc = Discretization::coarse();
        let q = psi_form(delta, 1.0, &c, &disc).unwrap();
        let eig = nalgebra::SymmetricEigen::new((q + q.transpose()) * 0.5).eigenvalues;
        prop_assert!(eig.min() > 0.0);
        prop_assert!((q - q.transpose()).norm() < 1e-10 * q.norm());
        let xi = Vec2::new(xi.0, xi.1);
        let p = |xi| AnnulusProblem { xi, r1: delta, r2: 1.0, c: c.clone(), disc };
        let a = solve_psi_annulus(&p(xi)).unwrap().value;
        let b = solve_psi_annulus(&p(xi * t)).unwrap().value;
        prop_assert!((b - t * t * a).abs() <= 1e-9 * b.max(1e-300));
    }

    #[test]
    fn scaling_leaves_the_form_unchanged(r1 in 1e-3..1.0f64, ratio in 1.5..200.0f64) {
        let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
        let disc = Discretization::coarse();
        let a = psi_form(r1, r1 * ratio, &c, &disc).unwrap();
        let b = psi_form(1.0 / ratio, 1.0, &c, &disc).unwrap();
        prop_assert!((a - b).norm() <= 1e-8 * b.norm());
    }
}
