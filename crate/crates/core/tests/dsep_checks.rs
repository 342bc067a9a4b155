//! Separation soundness: the ball-passing check against literal path
//! enumeration, the lifted check against the ground check, and the numerical
//! Markov property on models whose potentials encode the claimed structure.

mod common;

use std::collections::BTreeSet;

use common::{d_separated_paths, subsets_up_to, ExhaustiveJoint};
use liftdo_core::dsep::{d_separated, d_separated_lifted, SepQuery};
use liftdo_core::fixtures::{
    apply_seed_potentials, employee_model, employee_model_seeded, random_model, RandomStyle,
};
use liftdo_core::ground::ground;
use liftdo_core::model::cartesian;

/// Every single-atom separation query with |Z| <= 2 on every fixture agrees
/// with the path-enumeration oracle.
#[test]
fn ball_passing_agrees_with_path_enumeration() {
    let mut models = vec![employee_model()];
    for seed in 0..20 {
        let style = match seed % 3 {
            0 => RandomStyle::Mixed,
            1 => RandomStyle::DirectedCpt,
            _ => RandomStyle::Undirected,
        };
        models.push(random_model(seed, style, 8, 5));
    }
    for (i, m) in models.iter().enumerate() {
        let gm = ground(m).unwrap();
        let n = gm.atoms.len();
        let mut checked = 0usize;
        for x in 0..n {
            for y in x + 1..n {
                let rest: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                for z in subsets_up_to(&rest, 2) {
                    let zs: BTreeSet<usize> = z.iter().copied().collect();
                    let via_paths =
                        d_separated_paths(&gm, &BTreeSet::from([x]), &BTreeSet::from([y]), &zs);
                    let via_engine =
                        d_separated(&gm, &SepQuery::new([x], [y], zs.clone())).unwrap();
                    assert_eq!(
                        via_engine, via_paths,
                        "fixture {i}: x={x} y={y} z={zs:?}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }
}

/// The lifted check equals the conjunction over groundings for every
/// PRV-level query on the employee model.
#[test]
fn lifted_check_matches_ground_check_exhaustively() {
    let m = employee_model();
    let gm = ground(&m).unwrap();
    let prvs: Vec<usize> = (0..m.prvs.len()).collect();
    let ground_ids = |prv: usize| -> BTreeSet<usize> {
        gm.atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.atom.prv == prv)
            .map(|(i, _)| i)
            .collect()
    };
    let mut checked = 0usize;
    for sel in cartesian(&vec![3usize; prvs.len()]) {
        // 0 = in X, 1 = in Y, 2 = neither; Z ranges over subsets of the rest.
        let x: BTreeSet<usize> = prvs.iter().filter(|&&p| sel[p] == 0).copied().collect();
        let y: BTreeSet<usize> = prvs.iter().filter(|&&p| sel[p] == 1).copied().collect();
        if x.is_empty() || y.is_empty() {
            continue;
        }
        let rest: Vec<usize> = prvs.iter().filter(|&&p| sel[p] == 2).copied().collect();
        for zlen in 0..=rest.len() {
            for z in subsets_up_to(&rest, zlen) {
                let zs: BTreeSet<usize> = z.iter().copied().collect();
                let lifted =
                    d_separated_lifted(&m, &SepQuery::new(x.clone(), y.clone(), zs.clone()))
                        .unwrap();
                let gx: BTreeSet<usize> = x.iter().flat_map(|&p| ground_ids(p)).collect();
                let gy: BTreeSet<usize> = y.iter().flat_map(|&p| ground_ids(p)).collect();
                let gz: BTreeSet<usize> = zs.iter().flat_map(|&p| ground_ids(p)).collect();
                let on_ground = d_separated(&gm, &SepQuery::new(gx, gy, gz)).unwrap();
                assert_eq!(lifted, on_ground, "x={x:?} y={y:?} z={zs:?}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 12);
}

fn markov_property_holds(gm: &liftdo_core::ground::GroundModel, tol: f64) {
    let joint = ExhaustiveJoint::build(gm);
    let n = gm.atoms.len();
    for x in 0..n {
        for y in x + 1..n {
            let rest: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
            for z in subsets_up_to(&rest, 2) {
                let zs: BTreeSet<usize> = z.iter().copied().collect();
                if !d_separated(gm, &SepQuery::new([x], [y], zs)).unwrap() {
                    continue;
                }
                let z_cards: Vec<usize> = z.iter().map(|&a| gm.atoms[a].range.len()).collect();
                for z_vals in cartesian(&z_cards) {
                    let z_part: Vec<(usize, usize)> =
                        z.iter().copied().zip(z_vals.iter().copied()).collect();
                    let pz = joint.prob_of(&z_part);
                    if pz <= 0.0 {
                        continue;
                    }
                    for xv in 0..gm.atoms[x].range.len() {
                        for yv in 0..gm.atoms[y].range.len() {
                            let mut xyz = z_part.clone();
                            xyz.push((x, xv));
                            xyz.push((y, yv));
                            let mut xz = z_part.clone();
                            xz.push((x, xv));
                            let mut yz = z_part.clone();
                            yz.push((y, yv));
                            let lhs = joint.prob_of(&xyz) / pz;
                            let rhs = (joint.prob_of(&xz) / pz) * (joint.prob_of(&yz) / pz);
                            assert!(
                                (lhs - rhs).abs() <= tol,
                                "x={x} y={y} z={z_part:?}: {lhs} vs {rhs}"
                            );
                        }
                    }
                }
            }
        }
    }
}

/// Separation implies numerical conditional independence wherever the
/// potentials are consistent with the declared directions: the employee
/// model (whose separations all cut the skeleton), pure undirected models,
/// and single-factor-per-child conditional models.
#[test]
fn separation_implies_numerical_independence() {
    markov_property_holds(&ground(&employee_model_seeded(42)).unwrap(), 1e-9);
    for seed in [0, 1, 2] {
        let mut m = random_model(seed, RandomStyle::Undirected, 7, 5);
        apply_seed_potentials(&mut m, seed + 77);
        markov_property_holds(&ground(&m).unwrap(), 1e-9);
    }
    for seed in [5, 6] {
        let mut m = random_model(seed, RandomStyle::DirectedCpt, 7, 0);
        apply_seed_potentials(&mut m, seed + 99);
        markov_property_holds(&ground(&m).unwrap(), 1e-9);
    }
}

/// The converse direction only holds generically: spot-check that a
/// directly connected pair shows real dependence under seeded potentials.
#[test]
fn connected_pair_shows_dependence() {
    let m = employee_model_seeded(42);
    let gm = ground(&m).unwrap();
    let joint = ExhaustiveJoint::build(&gm);
    let rev = gm.atom_id_by_name("Rev").unwrap();
    let comp_a = gm.atom_id_by_name("Comp(alice)").unwrap();
    assert!(!d_separated(&gm, &SepQuery::new([comp_a], [rev], [])).unwrap());
    let mut max_gap = 0.0f64;
    for xv in 0..3 {
        for yv in 0..3 {
            let lhs = joint.prob_of(&[(comp_a, xv), (rev, yv)]);
            let rhs = joint.prob_of(&[(comp_a, xv)]) * joint.prob_of(&[(rev, yv)]);
            max_gap = max_gap.max((lhs - rhs).abs());
        }
    }
    assert!(max_gap > 1e-6, "dependence too weak: {max_gap}");
}
