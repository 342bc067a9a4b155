//! Separation checks on partially directed factor graphs.
//!
//! A path is blocked when it meets a collider variable (both adjacent edges
//! directed into it) whose self-or-descendants miss the conditioning set,
//! when it passes a conditioned non-collider variable, or when it hops
//! between two parents of a directed factor whose child (and all of the
//! child's descendants) is unobserved. The check runs as ball-passing
//! reachability over edge states, never by path enumeration.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::ground::{AtomId, GroundModel};
use crate::model::{Model, PrvId, Tuples};

/// Three disjoint node sets; `x` and `y` must be nonempty.
#[derive(Debug, Clone)]
pub struct SepQuery<T: Ord> {
    pub x: BTreeSet<T>,
    pub y: BTreeSet<T>,
    pub z: BTreeSet<T>,
}

impl<T: Ord + Clone + std::fmt::Debug> SepQuery<T> {
    pub fn new(
        x: impl IntoIterator<Item = T>,
        y: impl IntoIterator<Item = T>,
        z: impl IntoIterator<Item = T>,
    ) -> Self {
        SepQuery {
            x: x.into_iter().collect(),
            y: y.into_iter().collect(),
            z: z.into_iter().collect(),
        }
    }

    fn check_well_formed(&self, n_nodes: usize, id: impl Fn(&T) -> usize) -> Result<()> {
        if self.x.is_empty() || self.y.is_empty() {
            return Err(Error::Precondition(
                "separation query needs nonempty X and Y".into(),
            ));
        }
        for set in [&self.x, &self.y, &self.z] {
            for t in set {
                if id(t) >= n_nodes {
                    return Err(Error::UnknownAtom(format!("{t:?}")));
                }
            }
        }
        if self.x.intersection(&self.y).next().is_some()
            || self.x.intersection(&self.z).next().is_some()
            || self.y.intersection(&self.z).next().is_some()
        {
            return Err(Error::Precondition(
                "separation query sets must be pairwise disjoint".into(),
            ));
        }
        Ok(())
    }
}

/// Bipartite view shared by the ground and lifted checks.
pub(crate) struct SepGraph {
    n_vars: usize,
    /// Per factor: argument variables and the child position, if any.
    factors: Vec<(Vec<usize>, Option<usize>)>,
    /// Factors adjacent to each variable.
    var_factors: Vec<Vec<usize>>,
}

impl SepGraph {
    pub(crate) fn from_ground(gm: &GroundModel) -> SepGraph {
        let mut var_factors = vec![Vec::new(); gm.atoms.len()];
        let factors: Vec<(Vec<usize>, Option<usize>)> = gm
            .factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                for &a in &f.atoms {
                    var_factors[a].push(i);
                }
                (f.atoms.clone(), f.child)
            })
            .collect();
        SepGraph {
            n_vars: gm.atoms.len(),
            factors,
            var_factors,
        }
    }

    fn from_lifted(m: &Model) -> SepGraph {
        let mut var_factors = vec![Vec::new(); m.prvs.len()];
        let factors: Vec<(Vec<usize>, Option<usize>)> = m
            .parfactors
            .iter()
            .enumerate()
            .map(|(i, pf)| {
                for &a in &pf.args {
                    var_factors[a].push(i);
                }
                (pf.args.clone(), pf.child_arg())
            })
            .collect();
        SepGraph {
            n_vars: m.prvs.len(),
            factors,
            var_factors,
        }
    }

    /// `active[v]` holds when `v` or one of its descendants (via the
    /// directed projection) lies in `z`.
    fn self_or_descendant_observed(&self, z: &[bool]) -> Vec<bool> {
        let mut parents_of = vec![Vec::new(); self.n_vars];
        for (args, child) in &self.factors {
            if let Some(c) = child {
                let child_var = args[*c];
                for (i, &a) in args.iter().enumerate() {
                    if i != *c {
                        parents_of[child_var].push(a);
                    }
                }
            }
        }
        let mut active = z.to_vec();
        let mut queue: VecDeque<usize> = (0..self.n_vars).filter(|&v| z[v]).collect();
        while let Some(v) = queue.pop_front() {
            for &p in &parents_of[v] {
                if !active[p] {
                    active[p] = true;
                    queue.push_back(p);
                }
            }
        }
        active
    }

    /// Ball-passing reachability: true when some walk from `x` to `y` is
    /// unblocked given `z`.
    fn connected(&self, x: &[bool], y: &[bool], z: &[bool]) -> bool {
        let active = self.self_or_descendant_observed(z);

        // State: arrived at a factor from its child (true) or from a
        // non-child argument (false), and the mirrored states on variables:
        // arrived along a directed edge (true) or an undirected one (false).
        let mut seen_fac = vec![[false; 2]; self.factors.len()];
        let mut seen_var = vec![[false; 2]; self.n_vars];
        let mut queue: VecDeque<(bool, usize, bool)> = VecDeque::new(); // (is_factor, id, flag)

        for v in 0..self.n_vars {
            if !x[v] {
                continue;
            }
            for &f in &self.var_factors[v] {
                let (args, child) = &self.factors[f];
                let from_child = child.map(|c| args[c] == v).unwrap_or(false);
                if !seen_fac[f][from_child as usize] {
                    seen_fac[f][from_child as usize] = true;
                    queue.push_back((true, f, from_child));
                }
            }
        }

        while let Some((is_factor, id, flag)) = queue.pop_front() {
            if is_factor {
                let (args, child) = &self.factors[id];
                let from_child = flag;
                for (i, &v) in args.iter().enumerate() {
                    let to_child = child.map(|c| c == i).unwrap_or(false);
                    // A hop between two non-child arguments of a directed
                    // factor behaves as a collider on the factor's child.
                    let allowed = if !from_child && !to_child {
                        match child {
                            Some(c) => active[args[*c]],
                            None => true,
                        }
                    } else {
                        true
                    };
                    if !allowed {
                        continue;
                    }
                    if y[v] {
                        return true;
                    }
                    if !seen_var[v][to_child as usize] {
                        seen_var[v][to_child as usize] = true;
                        queue.push_back((false, v, to_child));
                    }
                }
            } else {
                let v = id;
                let came_directed = flag;
                for &f in &self.var_factors[v] {
                    let (args, child) = &self.factors[f];
                    let out_directed = child.map(|c| args[c] == v).unwrap_or(false);
                    let allowed = if came_directed && out_directed {
                        active[v] // collider at v
                    } else {
                        !z[v]
                    };
                    if !allowed {
                        continue;
                    }
                    if !seen_fac[f][out_directed as usize] {
                        seen_fac[f][out_directed as usize] = true;
                        queue.push_back((true, f, out_directed));
                    }
                }
            }
        }
        false
    }
}

impl SepGraph {
    /// Slice-based entry point for exhaustive sweeps; skips query
    /// well-formedness checks.
    pub(crate) fn separated_slices(&self, x: &[usize], y: &[usize], z: &[usize]) -> bool {
        let to_mask = |ids: &[usize]| {
            let mut m = vec![false; self.n_vars];
            for &i in ids {
                m[i] = true;
            }
            m
        };
        !self.connected(&to_mask(x), &to_mask(y), &to_mask(z))
    }
}

fn mask(n: usize, set: &BTreeSet<usize>) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in set {
        m[i] = true;
    }
    m
}

/// Ground separation check.
pub fn d_separated(gm: &GroundModel, q: &SepQuery<AtomId>) -> Result<bool> {
    q.check_well_formed(gm.atoms.len(), |&a| a)?;
    let g = SepGraph::from_ground(gm);
    let (x, y, z) = (
        mask(g.n_vars, &q.x),
        mask(g.n_vars, &q.y),
        mask(g.n_vars, &q.z),
    );
    Ok(!g.connected(&x, &y, &z))
}

/// Lifted separation check over whole PRVs, equivalent to grounding the
/// query sets and checking the ground model. Requires every parfactor to be
/// unconstrained; with explicit constraints the lifted graph no longer
/// summarises all groundings uniformly, and callers must fall back to the
/// ground check.
pub fn d_separated_lifted(m: &Model, q: &SepQuery<PrvId>) -> Result<bool> {
    for pf in &m.parfactors {
        if !matches!(pf.constraint.tuples, Tuples::Top) {
            return Err(Error::UnsupportedLiftedQuery(format!(
                "parfactor `{}` carries an explicit constraint",
                pf.name
            )));
        }
    }
    q.check_well_formed(m.prvs.len(), |&p| p)?;
    let g = SepGraph::from_lifted(m);
    let (x, y, z) = (
        mask(g.n_vars, &q.x),
        mask(g.n_vars, &q.y),
        mask(g.n_vars, &q.z),
    );
    Ok(!g.connected(&x, &y, &z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::employee_model;
    use crate::ground::ground;

    fn atom(gm: &GroundModel, name: &str) -> AtomId {
        gm.atom_id_by_name(name).unwrap()
    }

    #[test]
    fn example_competence_vs_salary_given_revenue() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        let q = SepQuery::new(
            [atom(&gm, "Comp(alice)")],
            [atom(&gm, "Sal(bob)")],
            [atom(&gm, "Rev")],
        );
        assert!(d_separated(&gm, &q).unwrap());
    }

    #[test]
    fn adjacent_atoms_are_never_separated_by_nothing() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        let q = SepQuery::new([atom(&gm, "Comp(alice)")], [atom(&gm, "Rev")], []);
        assert!(!d_separated(&gm, &q).unwrap());
    }

    #[test]
    fn collider_blocks_until_observed() {
        let src = "prv A() range {f,t}\nprv B() range {f,t}\nprv C() range {f,t}\n\
                   parfactor g1(A(),->C()) uniform\nparfactor g2(B(),->C()) uniform\n";
        let m = crate::io::parse_model(&crate::io::ModelSource::from_text(src)).unwrap();
        let gm = ground(&m).unwrap();
        let (a, b, c) = (atom(&gm, "A"), atom(&gm, "B"), atom(&gm, "C"));
        assert!(d_separated(&gm, &SepQuery::new([a], [b], [])).unwrap());
        assert!(!d_separated(&gm, &SepQuery::new([a], [b], [c])).unwrap());
    }

    #[test]
    fn shared_directed_factor_marries_parents() {
        // Two parents of one directed factor connect exactly when the child
        // or one of its descendants is observed.
        let src = "prv A() range {f,t}\nprv B() range {f,t}\nprv C() range {f,t}\nprv D() range {f,t}\n\
                   parfactor g(A(),B(),->C()) uniform\nparfactor h(C(),->D()) uniform\n";
        let m = crate::io::parse_model(&crate::io::ModelSource::from_text(src)).unwrap();
        let gm = ground(&m).unwrap();
        let (a, b, c, d) = (atom(&gm, "A"), atom(&gm, "B"), atom(&gm, "C"), atom(&gm, "D"));
        assert!(d_separated(&gm, &SepQuery::new([a], [b], [])).unwrap());
        assert!(!d_separated(&gm, &SepQuery::new([a], [b], [c])).unwrap());
        assert!(!d_separated(&gm, &SepQuery::new([a], [b], [d])).unwrap());
    }

    #[test]
    fn symmetry_in_x_and_y() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        let n = gm.atoms.len();
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                for z in 0..n {
                    if z == x || z == y {
                        continue;
                    }
                    let fwd = d_separated(&gm, &SepQuery::new([x], [y], [z])).unwrap();
                    let rev = d_separated(&gm, &SepQuery::new([y], [x], [z])).unwrap();
                    assert_eq!(fwd, rev);
                }
            }
        }
    }

    #[test]
    fn lifted_examples() {
        let m = employee_model();
        let comp = m.find_prv("Comp", 1).unwrap();
        let sal = m.find_prv("Sal", 1).unwrap();
        let rev = m.find_prv("Rev", 0).unwrap();
        // Direct factor g3 keeps Comp(E) and Sal(E) connected.
        let q = SepQuery::new([comp], [sal], [rev]);
        assert!(!d_separated_lifted(&m, &q).unwrap());
        // Overlapping sets are ill-formed.
        let q = SepQuery::new([comp], [sal], [rev, comp]);
        assert!(d_separated_lifted(&m, &q).is_err());
    }

    #[test]
    fn lifted_requires_unconstrained_factors() {
        let src = "logvar E {a,b}\nprv X(E) range {f,t}\nprv R() range {f,t}\n\
                   parfactor g(X(E),R()) where (E) in {(a)} uniform\nparfactor h(X(E),R()) uniform\n";
        let m = crate::io::parse_model(&crate::io::ModelSource::from_text(src)).unwrap();
        let x = m.find_prv("X", 1).unwrap();
        let r = m.find_prv("R", 0).unwrap();
        let q = SepQuery::new([x], [r], []);
        assert!(matches!(
            d_separated_lifted(&m, &q),
            Err(Error::UnsupportedLiftedQuery(_))
        ));
    }
}
