use dislab::io::{from_json, to_json};
use dislab::model::{Atom, BurgersLattice, DislocationMeasure, Domain, ElasticTensor, ReducedDomain};
use dislab::{Error, Mat2, Vec2};
use proptest::prelude::*;

fn sym_norm2(f: &Mat2) -> f64 {
    let s = (f + f.transpose()) * 0.5;
    s.norm_squared()
}

#[test]
fn isotropic_bounds_are_the_two_moduli() {
    // on symmetric matrices C = 2 mu I + lambda (1 (x) 1): eigenvalues 2 mu
    // (twice) and 2 mu + 2 lambda
    let c = ElasticTensor::isotropic(1.5, 0.5).unwrap();
    assert!((c.lower() - 1.0).abs() < 1e-12);
    assert!((c.upper() - 4.0).abs() < 1e-12);
    let soft = ElasticTensor::isotropic(-0.3, 1.0).unwrap();
    assert!((soft.lower() - 1.4).abs() < 1e-12);
    assert!(ElasticTensor::isotropic(-1.0, 1.0).is_err());
    assert!(ElasticTensor::isotropic(1.0, 0.0).is_err());
}

#[test]
fn tensors_round_trip_through_json() {
    let c = ElasticTensor::isotropic(0.7, 1.1).unwrap();
    let back: ElasticTensor = from_json(&to_json(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    let general = ElasticTensor::general(c.coefficients()).unwrap();
    let text = to_json(&general).unwrap();
    assert!(text.contains("\"general\""));
    let back: ElasticTensor = from_json(&text).unwrap();
    let f = Mat2::new(0.3, -1.2, 0.4, 2.0);
    assert!((back.form(&f) - c.form(&f)).abs() < 1e-12);
    let bad = from_json::<ElasticTensor>(r#"{"kind": "isotropic", "lambda": 0, "mu": -1}"#);
    assert!(matches!(bad, Err(Error::Schema { .. })));
}

#[test]
fn shortest_vector_of_a_skewed_basis() {
    let lat = BurgersLattice::new(Vec2::new(1.0, 0.0), Vec2::new(7.3, 0.2)).unwrap();
    // 7.3 - 7 leaves (0.3, 0.2)
    assert!((lat.min_length() - 0.13f64.sqrt()).abs() < 1e-12);
    assert!((BurgersLattice::triangular().min_length() - 1.0).abs() < 1e-12);
    assert!(BurgersLattice::new(Vec2::new(1.0, 2.0), Vec2::new(2.0, 4.0)).is_err());
}

#[test]
fn enumeration_matches_a_box_scan() {
    for lat in [BurgersLattice::square(), BurgersLattice::triangular(), BurgersLattice::new(Vec2::new(1.0, 0.0), Vec2::new(2.6, 0.4)).unwrap()] {
        for radius in [0.5, 1.0, 3.7, 9.0] {
            let got = lat.enumerate(radius).unwrap();
            let mut want = Vec::new();
            for m in -200i64..=200 {
                for n in -200i64..=200 {
                    let v = lat.combine(m, n);
                    if (m, n) != (0, 0) && v.norm() <= radius * (1.0 + 1e-12) {
                        want.push(v);
                    }
                }
            }
            assert_eq!(got.len(), want.len(), "radius {radius}");
            assert!(want.iter().all(|w| got.contains(w)));
        }
    }
    assert!(BurgersLattice::square().enumerate_capped(100.0, 10).is_err());
}

#[test]
fn measure_validation_names_the_atom() {
    let lat = BurgersLattice::square();
    let dom = Domain::unit_square();
    let mu = DislocationMeasure::new(vec![
        Atom::new(Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.0)),
        Atom::new(Vec2::new(0.5, 0.7), Vec2::new(0.5, 0.0)),
    ]);
    match mu.validate(&lat, &dom) {
        Err(Error::Schema { key, .. }) => assert_eq!(key, "atoms[1].xi"),
        other => panic!("{other:?}"),
    }
    let edge = DislocationMeasure::new(vec![Atom::new(Vec2::new(1.0, 0.5), Vec2::new(1.0, 0.0))]);
    assert!(edge.validate(&lat, &dom).is_err());
}

#[test]
fn measures_serialize_as_atom_lists() {
    let mu = DislocationMeasure::new(vec![Atom::new(Vec2::new(0.25, 0.5), Vec2::new(-1.0, 1.0))]);
    let text = to_json(&mu).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v, serde_json::json!([{"x": [0.25, 0.5], "xi": [-1.0, 1.0]}]));
    assert!((mu.total_variation() - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn ring_of_cores_disconnects_the_reduced_domain() {
    let dom = Domain::unit_square();
    let n = 12;
    let ring: Vec<Atom> = (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            Atom::new(Vec2::new(0.5 + 0.25 * t.cos(), 0.5 + 0.25 * t.sin()), Vec2::new(1.0, 0.0))
        })
        .collect();
    let mu = DislocationMeasure::new(ring);
    // neighbouring centres are 2 * 0.25 * sin(pi / 12) ~ 0.129 apart
    assert_eq!(ReducedDomain::new(&dom, &mu, 0.08).unwrap().components(0.005), 2);
    assert!(ReducedDomain::new(&dom, &mu, 0.05).unwrap().is_connected(0.005));
}

#[test]
fn polygon_queries() {
    let dom = Domain::regular_polygon(Vec2::zeros(), 1.0, 6).unwrap();
    assert!((dom.area() - 1.5 * 3f64.sqrt()).abs() < 1e-12);
    assert!((dom.dist_to_boundary(Vec2::zeros()) - 0.75f64.sqrt()).abs() < 1e-12);
    assert!(dom.contains(Vec2::new(0.9, 0.0)) && !dom.contains(Vec2::new(0.0, 0.9)));
    // clockwise input is reoriented
    let cw = Domain::polygon(vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0)]).unwrap();
    assert!((cw.area() - 1.0).abs() < 1e-15);
    let bowtie = Domain::polygon(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]);
    assert!(bowtie.is_err());
}

fn mat() -> impl Strategy<Value = Mat2> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c, d)| Mat2::new(a, b, c, d))
}

fn tensor() -> impl Strategy<Value = ElasticTensor> {
    // random positive definite matrix on symmetric matrices, A A^T + 0.1 I
    prop::array::uniform9(-1.0..1.0f64).prop_map(|v| {
        let a = nalgebra::Matrix3::from_row_slice(&v);
        ElasticTensor::from_sym_matrix(a * a.transpose() + nalgebra::Matrix3::identity() * 0.1).unwrap()
    })
}

proptest! {
    #[test]
    fn form_is_sandwiched_by_the_bounds(c in tensor(), f in mat()) {
        let s = sym_norm2(&f);
        let v = c.form(&f);
        prop_assert!(c.lower() * s <= v * (1.0 + 1e-12) + 1e-12);
        prop_assert!(v <= c.upper() * s * (1.0 + 1e-12) + 1e-12);
        prop_assert!((c.density(&f) - 0.5 * v).abs() <= 1e-14 * v.max(1.0));
    }

    #[test]
    fn form_ignores_the_skew_part(c in tensor(), f in mat(), w in -5.0..5.0f64) {
        let skew = Mat2::new(0.0, w, -w, 0.0);
        prop_assert!((c.form(&(f + skew)) - c.form(&f)).abs() <= 1e-12 * c.form(&f).max(1.0));
    }

    #[test]
    fn isotropic_closed_form_agrees_with_the_general_path(lambda in -0.5..3.0f64, mu in 0.6..3.0f64, f in mat()) {
        let c = ElasticTensor::isotropic(lambda, mu).unwrap();
        let g = ElasticTensor::general(c.coefficients()).unwrap();
        prop_assert!((c.form(&f) - g.form(&f)).abs() <= 1e-12 * c.form(&f).max(1.0));
        prop_assert!((c.lower() - g.lower()).abs() < 1e-12 && (c.upper() - g.upper()).abs() < 1e-12);
    }

    #[test]
    fn decompose_inverts_combine(m in -1000i64..1000, n in -1000i64..1000, tri in any::<bool>()) {
        let lat = if tri { BurgersLattice::triangular() } else { BurgersLattice::square() };
        prop_assert_eq!(lat.decompose(lat.combine(m, n)), Some((m, n)));
        prop_assert!(!lat.contains(lat.combine(m, n) + lat.b1() * 0.5));
    }
}
