//! Parfactor splitting: isolates intervened instances into dedicated
//! constrained parfactors while leaving the grounding, and therefore the
//! joint distribution, untouched.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{GroundAtom, Model, Parfactor, PrvId, Tuples};

/// What to split out: a single ground atom, or a PRV restricted to an
/// explicit instance set (the whole PRV when the set covers every tuple).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SplitTarget {
    Atom(GroundAtom),
    Slice(PrvId, Vec<Vec<usize>>),
}

impl SplitTarget {
    pub fn prv(&self) -> PrvId {
        match self {
            SplitTarget::Atom(a) => a.prv,
            SplitTarget::Slice(p, _) => *p,
        }
    }

    /// The instance tuples this target covers, sorted.
    pub fn instances(&self) -> Vec<Vec<usize>> {
        match self {
            SplitTarget::Atom(a) => vec![a.args.clone()],
            SplitTarget::Slice(_, set) => {
                let mut set = set.clone();
                set.sort();
                set.dedup();
                set
            }
        }
    }

    pub fn render(&self, m: &Model) -> String {
        match self {
            SplitTarget::Atom(a) => m.atom_name(a),
            SplitTarget::Slice(p, set) => {
                let prv = &m.prvs[*p];
                let all = m.prv_instances(*p);
                let mut sorted = set.clone();
                sorted.sort();
                if sorted == all {
                    let params: Vec<&str> = prv
                        .params
                        .iter()
                        .map(|&lv| m.logvars[lv].name.as_str())
                        .collect();
                    return format!("{}({})", prv.name, params.join(","));
                }
                let insts: Vec<String> = sorted
                    .iter()
                    .map(|t| {
                        t.iter()
                            .zip(&prv.params)
                            .map(|(&c, &lv)| m.logvars[lv].domain[c].clone())
                            .collect::<Vec<_>>()
                            .join(",")
                    })
                    .collect();
                format!("{}|{{{}}}", prv.name, insts.join(";"))
            }
        }
    }
}

fn check_target(m: &Model, t: &SplitTarget) -> Result<()> {
    let prv = t.prv();
    if prv >= m.prvs.len() {
        return Err(Error::UnknownPrv(format!("#{prv}")));
    }
    let dims: Vec<usize> = m.prvs[prv]
        .params
        .iter()
        .map(|&lv| m.logvars[lv].domain.len())
        .collect();
    for inst in t.instances() {
        if inst.len() != dims.len() || inst.iter().zip(&dims).any(|(&c, &d)| c >= d) {
            return Err(Error::UnknownAtom(format!(
                "{} has no instance {:?}",
                m.prvs[prv].name, inst
            )));
        }
    }
    Ok(())
}

/// Positions of a PRV's parameters within a parfactor's constraint logvars.
fn occurrence_positions(m: &Model, pf: &Parfactor, prv: PrvId) -> Option<Vec<usize>> {
    if !pf.args.contains(&prv) {
        return None;
    }
    Some(
        m.prvs[prv]
            .params
            .iter()
            .map(|lv| {
                pf.constraint
                    .logvars
                    .iter()
                    .position(|x| x == lv)
                    .expect("validated model: arg logvars subset of constraint logvars")
            })
            .collect(),
    )
}

fn fresh_name(base: &str, used: &BTreeSet<String>) -> String {
    let mut name = format!("{base}'");
    while used.contains(&name) {
        name.push('\'');
    }
    name
}

/// Splits every parfactor that mixes target and non-target groundings into
/// a target part (primed name) and a rest part (original name), both sharing
/// the original table. The ground factor multiset is unchanged; targets end
/// up with dedicated parfactors covering exactly their instances. Targets
/// are processed in the given order; splitting is idempotent.
pub fn split_on_atoms(m: &Model, targets: &[SplitTarget]) -> Result<Model> {
    for t in targets {
        check_target(m, t)?;
    }
    // Splitting never changes logvars or PRVs, so the original model serves
    // for every declaration lookup below.
    let mut out = m.clone();
    for target in targets {
        let prv = target.prv();
        let instances: BTreeSet<Vec<usize>> = target.instances().into_iter().collect();
        let mut used: BTreeSet<String> = out.parfactors.iter().map(|p| p.name.clone()).collect();
        let mut next: Vec<Parfactor> = Vec::with_capacity(out.parfactors.len());
        for pf in out.parfactors.drain(..) {
            let Some(positions) = occurrence_positions(m, &pf, prv) else {
                next.push(pf);
                continue;
            };
            let tuples = m.constraint_tuples(&pf.constraint);
            let (hit, rest): (Vec<Vec<usize>>, Vec<Vec<usize>>) = tuples
                .into_iter()
                .partition(|t| instances.contains(&project(t, &positions)));
            if hit.is_empty() || rest.is_empty() {
                next.push(pf);
                continue;
            }
            let mut rest_pf = pf.clone();
            rest_pf.constraint.tuples = Tuples::Explicit(sorted(rest));
            let mut hit_pf = pf.clone();
            hit_pf.name = fresh_name(&pf.name, &used);
            used.insert(hit_pf.name.clone());
            hit_pf.constraint.tuples = Tuples::Explicit(sorted(hit));
            next.push(rest_pf);
            next.push(hit_pf);
        }
        out.parfactors = next;
    }
    Ok(out)
}

fn project(tuple: &[usize], positions: &[usize]) -> Vec<usize> {
    positions.iter().map(|&p| tuple[p]).collect()
}

fn sorted(mut v: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    v.sort();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{employee_model, employee_model_seeded};
    use crate::ground::ground;

    fn alice_atom(m: &Model) -> SplitTarget {
        SplitTarget::Atom(m.resolve_atom("Comp", &["alice"]).unwrap())
    }

    #[test]
    fn split_on_comp_alice_matches_expected_structure() {
        let m = employee_model();
        let split = split_on_atoms(&m, &[alice_atom(&m)]).unwrap();
        let names: Vec<&str> = split.parfactors.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, vec!["g1", "g1'", "g2", "g3", "g3'"]);
        let g1 = &split.parfactors[0];
        assert_eq!(
            g1.constraint.tuples,
            Tuples::Explicit(vec![vec![1], vec![2]]) // bob, charlie
        );
        let g1p = &split.parfactors[1];
        assert_eq!(g1p.constraint.tuples, Tuples::Explicit(vec![vec![0]]));
        assert!(std::sync::Arc::ptr_eq(&g1.table, &g1p.table));
        // g2 has no Comp argument and stays untouched.
        assert_eq!(split.parfactors[2].constraint.tuples, Tuples::Top);
        assert!(split.validate().ok());
    }

    #[test]
    fn split_on_parameterless_prv_is_identity() {
        let m = employee_model();
        let rev = m.find_prv("Rev", 0).unwrap();
        let split = split_on_atoms(&m, &[SplitTarget::Slice(rev, vec![vec![]])]).unwrap();
        assert_eq!(m, split);
    }

    #[test]
    fn split_on_constrained_slice() {
        let m = employee_model();
        let comp = m.find_prv("Comp", 1).unwrap();
        let t = SplitTarget::Slice(comp, vec![vec![0], vec![1]]); // alice, bob
        let split = split_on_atoms(&m, &[t]).unwrap();
        assert_eq!(split.parfactors.len(), 5);
        let gm_before = ground(&m).unwrap();
        let gm_after = ground(&split).unwrap();
        assert_eq!(gm_before.factors.len(), gm_after.factors.len());
    }

    #[test]
    fn ground_factor_multiset_is_preserved() {
        let m = employee_model_seeded(42);
        let split = split_on_atoms(&m, &[alice_atom(&m)]).unwrap();
        let key = |gm: &crate::ground::GroundModel| {
            let mut v: Vec<(Vec<usize>, Vec<u64>)> = gm
                .factors
                .iter()
                .map(|f| {
                    (
                        f.atoms.clone(),
                        f.table.iter().map(|x| x.to_bits()).collect(),
                    )
                })
                .collect();
            v.sort();
            v
        };
        let a = ground(&m).unwrap();
        let b = ground(&split).unwrap();
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn split_preserves_joint_on_all_assignments() {
        let m = employee_model_seeded(42);
        let split = split_on_atoms(&m, &[alice_atom(&m)]).unwrap();
        let gm = ground(&m).unwrap();
        let gs = ground(&split).unwrap();
        // Atom order is identical by construction.
        for (a, b) in gm.atoms.iter().zip(&gs.atoms) {
            assert_eq!(a.name, b.name);
        }
        for a in gm.assignments() {
            let pa = gm.joint_probability(&a).unwrap();
            let pb = gs.joint_probability(&a).unwrap();
            assert!((pa - pb).abs() <= 1e-12, "{pa} vs {pb}");
        }
    }

    #[test]
    fn splitting_twice_is_idempotent() {
        let m = employee_model();
        let t = alice_atom(&m);
        let once = split_on_atoms(&m, &[t.clone()]).unwrap();
        let twice = split_on_atoms(&once, &[t]).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unknown_target_prv_fails() {
        let m = employee_model();
        let t = SplitTarget::Slice(99, vec![vec![0]]);
        assert!(split_on_atoms(&m, &[t]).is_err());
    }
}
