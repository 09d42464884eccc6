use dislab::fields::StrainField;
use dislab::model::{Atom, DislocationMeasure, Domain, ElasticTensor};
use dislab::surgery::{run_surgery, Region, SurgeryParams};
use dislab::Vec2;

fn square() -> Region {
    Region::Polygon { domain: Domain::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)).unwrap() }
}

fn params(eps: f64) -> SurgeryParams {
    SurgeryParams::new(0.4, 0.2, 0.0, 100.0, eps)
}

#[test]
fn empty_measure_is_untouched() {
    let mu = DislocationMeasure::new(vec![]);
    let beta = StrainField::zero();
    let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
    let res = run_surgery(&mu, &beta, &square(), &params(1e-3), &c).unwrap();
    assert!(res.balls.is_empty());
    assert!(res.field.levels.is_empty());
    assert!(res.diagnostics.pass());
}

#[test]
fn dipole_is_deleted() {
    let eps = 1e-3;
    let b = Vec2::new(1.0, 0.0);
    let mu = DislocationMeasure::new(vec![
        Atom::new(Vec2::new(-2.0 * eps, 0.0), b),
        Atom::new(Vec2::new(2.0 * eps, 0.0), -b),
    ]);
    let beta = StrainField::superposition(&mu, eps).unwrap();
    let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
    let res = run_surgery(&mu, &beta, &square(), &params(eps), &c).unwrap();
    println!("{:#?}", res.steps);
    println!("{:#?}", res.diagnostics);
    assert_eq!(res.steps.deleted.len(), 1);
    assert!(res.curl.is_empty());
    assert!(res.diagnostics.pass());
}

#[test]
fn single_dislocation_keeps_its_curl() {
    let eps = 1e-3;
    let b = Vec2::new(1.0, 0.0);
    let mu = DislocationMeasure::new(vec![Atom::new(Vec2::new(0.0, 0.0), b)]);
    let beta = StrainField::superposition(&mu, eps).unwrap();
    let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
    let res = run_surgery(&mu, &beta, &square(), &params(eps), &c).unwrap();
    println!("{:#?}", res.steps);
    println!("{:#?}", res.diagnostics);
    assert_eq!(res.curl.len(), 1);
    assert!((res.diagnostics.variation.total_variation - 1.0).abs() < 1e-9);
    assert!(res.diagnostics.pass());
}
