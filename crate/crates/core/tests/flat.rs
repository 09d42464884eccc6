use dislab::flat::{
    flat_convergence_monitor, scalar_flat_norm, scalar_flat_norm_with, vector_flat_surrogate, FlatOptions,
};
use dislab::model::{Atom, DislocationMeasure, Domain};
use dislab::Vec2;
use proptest::prelude::*;

/// Exact flat norm of unit atoms in a convex domain: every atom is matched
/// to an atom of opposite sign or sent to the boundary, at Euclidean cost.
/// Enumerates all partial matchings.
fn exact_unit_transport(pos: &[Vec2], neg: &[Vec2], dom: &Domain) -> f64 {
    fn go(i: usize, pos: &[Vec2], neg: &[Vec2], used: &mut Vec<bool>, dom: &Domain) -> f64 {
        if i == pos.len() {
            return neg.iter().zip(used.iter()).filter(|(_, u)| !**u).map(|(y, _)| dom.dist_to_boundary(*y)).sum();
        }
        let mut best = dom.dist_to_boundary(pos[i]) + go(i + 1, pos, neg, used, dom);
        for j in 0..neg.len() {
            if !used[j] {
                used[j] = true;
                best = best.min((pos[i] - neg[j]).norm() + go(i + 1, pos, neg, used, dom));
                used[j] = false;
            }
        }
        best
    }
    go(0, pos, neg, &mut vec![false; neg.len()], dom)
}

#[test]
fn single_atom_goes_to_the_boundary() {
    let dom = Domain::unit_square();
    let v = scalar_flat_norm(&[(Vec2::new(0.3, 0.6), 2.0)], &dom, 0.01).unwrap();
    assert!((v.value - 0.6).abs() <= 2.0 * 0.01 * 2.0);
    assert!(v.grid_nodes > 0);
}

#[test]
fn close_dipole_cancels_and_far_dipole_splits() {
    let dom = Domain::unit_square();
    let h = 0.01;
    let near = scalar_flat_norm(&[(Vec2::new(0.45, 0.5), 1.0), (Vec2::new(0.55, 0.5), -1.0)], &dom, h).unwrap();
    assert!((near.value - 0.1).abs() <= 2.0 * h);
    let far = scalar_flat_norm(&[(Vec2::new(0.05, 0.5), 1.0), (Vec2::new(0.95, 0.5), -1.0)], &dom, h).unwrap();
    assert!((far.value - 0.1).abs() <= 2.0 * h);
}

#[test]
fn l_shaped_domain_atoms_exit_through_the_boundary() {
    // the straight segment between the atoms leaves the domain
    let dom = Domain::polygon(vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(2.0, 0.0),
        Vec2::new(2.0, 1.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(1.0, 2.0),
        Vec2::new(0.0, 2.0),
    ])
    .unwrap();
    let h = 0.01;
    let (a, b) = (Vec2::new(1.5, 0.5), Vec2::new(0.5, 1.5));
    let v = scalar_flat_norm(&[(a, 1.0), (b, -1.0)], &dom, h).unwrap();
    // boundary distance is 0.5 each, cheaper than any inside path
    assert!((v.value - 1.0).abs() <= 2.0 * h + 0.01);
    assert!(dom.contains(a) && dom.contains(b));
}

#[test]
fn bad_inputs_are_rejected() {
    let dom = Domain::unit_square();
    assert!(scalar_flat_norm(&[(Vec2::new(1.5, 0.5), 1.0)], &dom, 0.01).is_err());
    assert!(scalar_flat_norm(&[(Vec2::new(0.5, 0.5), 1.0)], &dom, 0.0).is_err());
    let tight = [(Vec2::new(0.5, 0.5), 1.0), (Vec2::new(0.51, 0.5), -1.0)];
    assert!(scalar_flat_norm(&tight, &dom, 0.01).is_err());
    let mut opts = FlatOptions::new(1e-4);
    opts.max_nodes = 1000;
    assert!(scalar_flat_norm_with(&[(Vec2::new(0.5, 0.5), 1.0)], &dom, &opts).is_err());
    assert_eq!(scalar_flat_norm(&[], &dom, 0.01).unwrap().value, 0.0);
}

#[test]
fn wider_stencils_approach_the_euclidean_distance() {
    let dom = Domain::unit_square();
    let atoms = [(Vec2::new(0.3, 0.31), 1.0), (Vec2::new(0.62, 0.55), -1.0)];
    let exact = (atoms[0].0 - atoms[1].0).norm();
    let err = |w: i64| {
        let opts = FlatOptions { h: 0.01, stencil: w, max_nodes: 1_000_000 };
        (scalar_flat_norm_with(&atoms, &dom, &opts).unwrap().value - exact).abs()
    };
    assert!(err(4) < err(1));
    assert!(err(4) <= 0.02);
}

#[test]
fn monitor_flags_decreasing_distances() {
    let dom = Domain::unit_square();
    let target = DislocationMeasure::new(vec![Atom::new(Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.0))]);
    // mu_k / |log eps_k| approaches the target as the extra dipole shrinks
    let seq: Vec<(DislocationMeasure, f64)> = [1e-2, 1e-3, 1e-4]
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let le = -f64::ln(eps);
            let off = 0.3 / (k as f64 + 1.0);
            let mu = DislocationMeasure::new(vec![
                Atom::new(Vec2::new(0.5, 0.5), Vec2::new(le, 0.0)),
                Atom::new(Vec2::new(0.2, 0.2), Vec2::new(0.0, le)),
                Atom::new(Vec2::new(0.2 + off, 0.2), Vec2::new(0.0, -le)),
            ]);
            (mu, eps)
        })
        .collect();
    let rep = flat_convergence_monitor(&seq, &target, &dom, &[0.01]).unwrap();
    assert_eq!(rep.rows.len(), 3);
    assert!(rep.monotone_decreasing);
    assert!(flat_convergence_monitor(&seq, &target, &dom, &[0.01, 0.01]).is_err());
}

fn site() -> impl Strategy<Value = Vec2> {
    (1..10i32, 1..10i32).prop_map(|(i, j)| Vec2::new(i as f64 * 0.1, j as f64 * 0.1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_atoms_match_exact_transport(sites in prop::collection::btree_set((1..10i32, 1..10i32), 2..6), split in 0usize..6) {
        let dom = Domain::unit_square();
        let h = 0.01;
        let pts: Vec<Vec2> = sites.iter().map(|&(i, j)| Vec2::new(i as f64 * 0.1, j as f64 * 0.1)).collect();
        let k = split.min(pts.len());
        let (pos, neg) = pts.split_at(k);
        let atoms: Vec<(Vec2, f64)> = pos.iter().map(|p| (*p, 1.0)).chain(neg.iter().map(|p| (*p, -1.0))).collect();
        let got = scalar_flat_norm(&atoms, &dom, h).unwrap().value;
        let want = exact_unit_transport(pos, neg, &dom);
        // the grid metric overestimates by under 1% and each atom is snapped
        // to a node within h
        prop_assert!(got >= want - 2.0 * h * atoms.len() as f64, "{got} vs {want}");
        prop_assert!(got <= 1.01 * want + 2.0 * h * atoms.len() as f64, "{got} vs {want}");
    }

    #[test]
    fn surrogate_is_a_norm(
        a in prop::collection::vec((site(), -2i32..=2, -2i32..=2), 1..5),
        b in prop::collection::vec((site(), -2i32..=2, -2i32..=2), 1..5),
        t in -3.0..3.0f64,
    ) {
        let dom = Domain::unit_square();
        let to_mu = |v: &[(Vec2, i32, i32)]| {
            DislocationMeasure::new(v.iter().map(|(x, p, q)| Atom::new(*x, Vec2::new(*p as f64, *q as f64))).collect())
        };
        let (ma, mb) = (to_mu(&a), to_mu(&b));
        let n = |m: &DislocationMeasure| vector_flat_surrogate(m, &dom, 0.02).unwrap().value;
        let (na, nb) = (n(&ma), n(&mb));
        prop_assert!(n(&ma.union(&mb)) <= na + nb + 1e-9 * (na + nb));
        prop_assert!((n(&ma.scaled(t)) - t.abs() * na).abs() <= 1e-9 * na.max(1.0));
        prop_assert!(na >= 0.0);
    }
}
