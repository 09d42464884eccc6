use dislab::experiments::{
    gen_configuration, run_experiment, BurgersRule, CountRule, ExperimentConfig, ExperimentKind, ExperimentOutput,
    GeneratorSpec, LiminfSettings,
};
use dislab::io::to_json;
use dislab::model::{BurgersLattice, Domain, ReducedDomain};
use dislab::Vec2;

fn well_separated(count: CountRule) -> GeneratorSpec {
    GeneratorSpec::WellSeparated { count, gamma0: 0.5, margin: 0.1, burgers: BurgersRule::Random }
}

#[test]
fn count_rules_follow_their_powers_of_log_eps() {
    let eps = 1e-4;
    let le = -f64::ln(eps);
    assert_eq!(CountRule::Subcritical.count(eps), le.sqrt().round() as usize);
    assert_eq!(CountRule::Critical.count(eps), le.round() as usize);
    assert_eq!(CountRule::Supercritical.count(eps), (le * le).round() as usize);
    assert_eq!(CountRule::Fixed(7).count(eps), 7);
    let sub = CountRule::Subcritical.count(eps);
    let crit = CountRule::Critical.count(eps);
    let sup = CountRule::Supercritical.count(eps);
    assert!(sub < crit && crit < sup);
}

#[test]
fn generation_is_deterministic_in_the_seed() {
    let dom = Domain::unit_square();
    let lat = BurgersLattice::square();
    let spec = well_separated(CountRule::Critical);
    let a = gen_configuration(&spec, &dom, &lat, 1e-3, 11).unwrap();
    let b = gen_configuration(&spec, &dom, &lat, 1e-3, 11).unwrap();
    let c = gen_configuration(&spec, &dom, &lat, 1e-3, 12).unwrap();
    assert_eq!(to_json(&a.mu).unwrap(), to_json(&b.mu).unwrap());
    assert_ne!(to_json(&a.mu).unwrap(), to_json(&c.mu).unwrap());
    assert_eq!(a.mu.atoms.len(), 7);
}

#[test]
fn well_separated_atoms_keep_their_distances() {
    let dom = Domain::unit_square();
    let lat = BurgersLattice::triangular();
    let eps = 1e-3;
    let cfg = gen_configuration(&well_separated(CountRule::Critical), &dom, &lat, eps, 3).unwrap();
    let atoms = &cfg.mu.atoms;
    for (i, a) in atoms.iter().enumerate() {
        assert!(dom.dist_to_boundary(a.x) >= 0.1);
        assert!(lat.contains(a.xi) && a.xi.norm() > 0.0);
        for b in &atoms[i + 1..] {
            assert!((a.x - b.x).norm() >= eps.sqrt());
        }
    }
    // a single atom sits at the centre
    let one = gen_configuration(&well_separated(CountRule::Fixed(1)), &dom, &lat, eps, 3).unwrap();
    assert_eq!(one.mu.atoms[0].x, Vec2::new(0.5, 0.5));
}

#[test]
fn dipole_arrays_are_neutral() {
    let spec = GeneratorSpec::DipoleArray {
        pairs: 5,
        gap: 4.0,
        separation: 0.2,
        margin: 0.1,
        burgers: BurgersRule::Random,
    };
    let cfg = gen_configuration(&spec, &Domain::unit_square(), &BurgersLattice::square(), 1e-3, 5).unwrap();
    assert_eq!(cfg.mu.atoms.len(), 10);
    assert!(cfg.mu.total_mass().norm() < 1e-15);
}

#[test]
fn ring_disconnects_the_reduced_domain() {
    let eps = 1e-2;
    let spec = GeneratorSpec::DisconnectingRing { cores: 8, center: None, ring_factor: 2.4, skew: 1.0 };
    let dom = Domain::unit_square();
    let cfg = gen_configuration(&spec, &dom, &BurgersLattice::square(), eps, 0).unwrap();
    assert_eq!(cfg.mu.atoms.len(), 8);
    let le = -eps.ln();
    assert!((cfg.skew_patch.unwrap() - le * le / (2.4 * eps)).abs() < 1e-9);
    let reduced = ReducedDomain::new(&dom, &cfg.mu, eps).unwrap();
    assert_eq!(reduced.components(eps / 10.0), 2);
    // cores that do not touch are refused
    let loose = GeneratorSpec::DisconnectingRing { cores: 8, center: None, ring_factor: 6.0, skew: 0.0 };
    assert!(gen_configuration(&loose, &dom, &BurgersLattice::square(), eps, 0).is_err());
}

#[test]
fn infeasible_packing_is_reported() {
    let spec = well_separated(CountRule::Fixed(200));
    let res = gen_configuration(&spec, &Domain::unit_square(), &BurgersLattice::square(), 1e-2, 0);
    assert!(res.is_err());
}

#[test]
fn sweep_rows_follow_the_ladder() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::EnergySweep, Some(well_separated(CountRule::Fixed(2))));
    cfg.ladder = vec![1e-2, 1e-3];
    cfg.seed = 4;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(to_json(&a).unwrap(), to_json(&b).unwrap());
    let ExperimentOutput::EnergySweep(rep) = a else { panic!("wrong output kind") };
    assert_eq!(rep.rows.len(), 2);
    for (row, eps) in rep.rows.iter().zip(&cfg.ladder) {
        assert_eq!(row.eps, *eps);
        assert_eq!(row.n, 2);
        assert!((row.f_eps - (row.elastic + row.core) / (row.log_eps * row.log_eps)).abs() < 1e-12 * row.f_eps);
    }
}

#[test]
fn lower_bound_stays_below_a_single_atom() {
    let spec = GeneratorSpec::WellSeparated {
        count: CountRule::Fixed(1),
        gamma0: 0.5,
        margin: 0.1,
        burgers: BurgersRule::Fixed([1.0, 0.0]),
    };
    let mut cfg = ExperimentConfig::new(ExperimentKind::LiminfGap { liminf: LiminfSettings::default() }, Some(spec));
    cfg.ladder = vec![1e-2, 1e-3, 1e-4];
    let ExperimentOutput::LiminfGap(rep) = run_experiment(&cfg).unwrap() else { panic!("wrong output kind") };
    assert_eq!(rep.rows.len(), 3);
    assert!(rep.bound_holds);
    for row in &rep.rows {
        assert!(row.lower_total <= row.f_eps * (1.0 + 1e-12), "{} vs {}", row.lower_total, row.f_eps);
    }
}

#[test]
fn missing_generator_and_bad_ladders_are_rejected() {
    let cfg = ExperimentConfig::new(ExperimentKind::EnergySweep, None);
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::new(ExperimentKind::EnergySweep, Some(well_separated(CountRule::Fixed(1))));
    cfg.ladder = vec![1e-3, 1e-2];
    assert!(cfg.validate().is_err());
    cfg.ladder = vec![];
    assert!(cfg.validate().is_err());
}
