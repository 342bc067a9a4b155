//! Grounding and evaluation of the full joint distribution.
//!
//! Grounding instantiates every parfactor once per constraint tuple. The
//! ground model represents the distribution
//! `P(a) = (1/Z) * prod_f table_f(a)` over total assignments `a`; factor
//! tables are shared with their source parfactors.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::model::{cartesian, row_major_index, GroundAtom, Model, ParfactorId};

/// Index of an atom in [`GroundModel::atoms`].
pub type AtomId = usize;

/// One ground random variable.
#[derive(Debug, Clone)]
pub struct AtomInfo {
    pub atom: GroundAtom,
    pub name: String,
    pub range: Arc<Vec<String>>,
}

/// One grounding of a parfactor. `binding` assigns a constant to each of the
/// source parfactor's logvars; `child` indexes into `atoms`.
#[derive(Debug, Clone)]
pub struct GroundFactor {
    pub source: ParfactorId,
    pub name: String,
    pub binding: Vec<usize>,
    pub atoms: Vec<AtomId>,
    pub child: Option<usize>,
    pub table: Arc<Vec<f64>>,
}

impl GroundFactor {
    pub fn child_atom(&self) -> Option<AtomId> {
        self.child.map(|c| self.atoms[c])
    }
}

/// A ground partially directed factor graph.
#[derive(Debug)]
pub struct GroundModel {
    pub atoms: Vec<AtomInfo>,
    pub factors: Vec<GroundFactor>,
    index: HashMap<GroundAtom, AtomId>,
    z: OnceLock<Result<f64>>,
}

impl Clone for GroundModel {
    fn clone(&self) -> Self {
        GroundModel {
            atoms: self.atoms.clone(),
            factors: self.factors.clone(),
            index: self.index.clone(),
            z: OnceLock::new(),
        }
    }
}

/// A total assignment of range values (as indices) to the atoms of one
/// ground model, in atom order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(pub Vec<usize>);

impl GroundModel {
    pub fn atom_id(&self, atom: &GroundAtom) -> Result<AtomId> {
        self.index
            .get(atom)
            .copied()
            .ok_or_else(|| Error::UnknownAtom(format!("{atom:?}")))
    }

    pub fn atom_id_by_name(&self, name: &str) -> Result<AtomId> {
        self.atoms
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAtom(name.to_string()))
    }

    /// Cardinalities of every atom's range, in atom order.
    pub fn cards(&self) -> Vec<usize> {
        self.atoms.iter().map(|a| a.range.len()).collect()
    }

    /// Number of total assignments, as f64 to avoid overflow.
    pub fn state_space(&self) -> f64 {
        self.atoms.iter().map(|a| a.range.len() as f64).product()
    }

    /// Iterates all total assignments in row-major atom order.
    pub fn assignments(&self) -> impl Iterator<Item = Assignment> + '_ {
        cartesian(&self.cards()).into_iter().map(Assignment)
    }

    /// Variables directly fixed as effects of `atom` through some factor.
    pub fn children_of(&self, atom: AtomId) -> Vec<AtomId> {
        let mut out = Vec::new();
        for f in &self.factors {
            if let Some(c) = f.child_atom() {
                if c != atom && f.atoms.contains(&atom) && !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Parents of `atom`: co-arguments of factors whose child is `atom`.
    pub fn parents_of(&self, atom: AtomId) -> Vec<AtomId> {
        let mut out = Vec::new();
        for f in &self.factors {
            if f.child_atom() == Some(atom) {
                for &a in &f.atoms {
                    if a != atom && !out.contains(&a) {
                        out.push(a);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// True when every factor carries a child mark.
    pub fn is_fully_directed(&self) -> bool {
        self.factors.iter().all(|f| f.child.is_some())
    }

    /// The factor's potential at a total assignment.
    pub fn factor_value(&self, f: &GroundFactor, a: &Assignment) -> f64 {
        let dims: Vec<usize> = f.atoms.iter().map(|&id| self.atoms[id].range.len()).collect();
        let tuple: Vec<usize> = f.atoms.iter().map(|&id| a.0[id]).collect();
        f.table[row_major_index(&tuple, &dims)]
    }

    /// Product of all factor potentials at `a`, unnormalised.
    pub fn unnormalized_weight(&self, a: &Assignment) -> f64 {
        self.factors.iter().map(|f| self.factor_value(f, a)).product()
    }

    /// The normalisation constant, computed once by variable elimination and
    /// cached. Falls back to log-space accumulation when a range check on
    /// the factor tables signals possible overflow or underflow.
    pub fn normalization(&self) -> Result<f64> {
        self.z
            .get_or_init(|| crate::infer::partition_function(self))
            .clone()
    }

    /// `P(a)` under the model's normalised product semantics.
    pub fn joint_probability(&self, a: &Assignment) -> Result<f64> {
        if a.0.len() != self.atoms.len() {
            return Err(Error::Precondition(format!(
                "assignment covers {} atoms, model has {}",
                a.0.len(),
                self.atoms.len()
            )));
        }
        Ok(self.unnormalized_weight(a) / self.normalization()?)
    }
}

/// Grounds a model. One ground factor per (parfactor, constraint tuple);
/// atoms are ordered by PRV declaration then row-major instance order, and
/// only atoms touched by at least one factor appear.
pub fn ground(model: &Model) -> Result<GroundModel> {
    // Collect the atoms each factor touches.
    let mut touched: Vec<(ParfactorId, Vec<usize>, Vec<GroundAtom>)> = Vec::new();
    for (pf_id, pf) in model.parfactors.iter().enumerate() {
        let tuples = model.constraint_tuples(&pf.constraint);
        for tuple in tuples {
            let mut atoms = Vec::with_capacity(pf.args.len());
            for &arg in &pf.args {
                let prv = &model.prvs[arg];
                let args: Vec<usize> = prv
                    .params
                    .iter()
                    .map(|&lv| {
                        let pos = pf
                            .constraint
                            .logvars
                            .iter()
                            .position(|&x| x == lv)
                            .expect("validated model: arg logvars subset of constraint logvars");
                        tuple[pos]
                    })
                    .collect();
                atoms.push(GroundAtom { prv: arg, args });
            }
            touched.push((pf_id, tuple, atoms));
        }
    }

    let touched_set: std::collections::HashSet<&GroundAtom> =
        touched.iter().flat_map(|(_, _, atoms)| atoms).collect();

    let mut gm = GroundModel {
        atoms: Vec::new(),
        factors: Vec::new(),
        index: HashMap::new(),
        z: OnceLock::new(),
    };
    for (prv_id, prv) in model.prvs.iter().enumerate() {
        let range = Arc::new(prv.range.clone());
        for instance in model.prv_instances(prv_id) {
            let atom = GroundAtom {
                prv: prv_id,
                args: instance,
            };
            if touched_set.contains(&atom) {
                let id = gm.atoms.len();
                gm.index.insert(atom.clone(), id);
                gm.atoms.push(AtomInfo {
                    name: model.atom_name(&atom),
                    atom,
                    range: range.clone(),
                });
            }
        }
    }

    for (pf_id, tuple, atoms) in touched {
        let pf = &model.parfactors[pf_id];
        let atom_ids: Vec<AtomId> = atoms.iter().map(|a| gm.index[a]).collect();
        gm.factors.push(GroundFactor {
            source: pf_id,
            name: pf.name.clone(),
            binding: tuple,
            atoms: atom_ids,
            child: pf.child_arg(),
            table: pf.table.clone(),
        });
    }

    // Inherited acyclicity check on the ground directed projection.
    if ground_directed_cycle(&gm) {
        return Err(Error::InvalidModel(
            "ground directed projection contains a cycle".into(),
        ));
    }
    Ok(gm)
}

/// Cycle test over the variable-level directed projection of a ground model.
pub fn ground_directed_cycle(gm: &GroundModel) -> bool {
    let n = gm.atoms.len();
    let mut adj: Vec<Vec<AtomId>> = vec![Vec::new(); n];
    for f in &gm.factors {
        if let Some(c) = f.child_atom() {
            for &a in &f.atoms {
                if a != c {
                    adj[a].push(c);
                }
            }
        }
    }
    let mut state = vec![0u8; n];
    fn dfs(v: usize, adj: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[v] = 1;
        for &w in &adj[v] {
            if state[w] == 1 {
                return true;
            }
            if state[w] == 0 && dfs(w, adj, state) {
                return true;
            }
        }
        state[v] = 2;
        false
    }
    (0..n).any(|v| state[v] == 0 && dfs(v, &adj, &mut state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{employee_model, employee_model_seeded};

    /// Exhaustive-sum reference for the normalisation constant.
    fn brute_force_z(gm: &GroundModel) -> f64 {
        gm.assignments().map(|a| gm.unnormalized_weight(&a)).sum()
    }

    #[test]
    fn employee_grounding_counts() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        assert_eq!(gm.atoms.len(), 7);
        assert_eq!(gm.factors.len(), 9);
        // Table size: two ternary arguments.
        assert_eq!(m.parfactors[0].table.len(), 9);
        let g1_copies: Vec<&GroundFactor> =
            gm.factors.iter().filter(|f| f.name == "g1").collect();
        assert_eq!(g1_copies.len(), 3);
        let names: Vec<String> = g1_copies
            .iter()
            .map(|f| {
                format!(
                    "{}({})",
                    f.name,
                    f.atoms
                        .iter()
                        .map(|&a| gm.atoms[a].name.clone())
                        .collect::<Vec<_>>()
                        .join(",")
                )
            })
            .collect();
        assert_eq!(
            names,
            vec![
                "g1(Comp(alice),Rev)",
                "g1(Comp(bob),Rev)",
                "g1(Comp(charlie),Rev)"
            ]
        );
    }

    #[test]
    fn factor_count_matches_constraint_tuples() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        let expected: usize = m
            .parfactors
            .iter()
            .map(|pf| m.grounding_count(pf))
            .sum();
        assert_eq!(gm.factors.len(), expected);
    }

    #[test]
    fn parameterless_model_grounds_isomorphically() {
        let src = "prv A() range {f,t}\nprv B() range {f,t}\nparfactor g(A(),->B()) uniform\n";
        let m = crate::io::parse_model(&crate::io::ModelSource::from_text(src)).unwrap();
        let gm = ground(&m).unwrap();
        assert_eq!(gm.atoms.len(), 2);
        assert_eq!(gm.factors.len(), 1);
        assert_eq!(gm.factors[0].child_atom(), Some(1));
    }

    #[test]
    fn uniform_employee_joint_is_uniform() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        let a = Assignment(vec![0; 7]);
        let p = gm.joint_probability(&a).unwrap();
        let expected = 1.0 / 3f64.powi(7);
        assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
        assert_eq!(gm.normalization().unwrap(), 2187.0);
    }

    #[test]
    fn seeded_joint_matches_exhaustive_enumeration() {
        let m = employee_model_seeded(42);
        let gm = ground(&m).unwrap();
        let z = brute_force_z(&gm);
        let all_low = Assignment(vec![0; 7]);
        let expected = gm.unnormalized_weight(&all_low) / z;
        let got = gm.joint_probability(&all_low).unwrap();
        assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");

        let total: f64 = gm
            .assignments()
            .map(|a| gm.joint_probability(&a).unwrap())
            .sum();
        assert!((total - 1.0).abs() <= 1e-12, "sum {total}");
    }

    #[test]
    fn normalization_examples() {
        let src = "prv A() range {f,t}\nparfactor g(->A()) table {\n(f)=2.0\n(t)=6.0\n}\n";
        let m = crate::io::parse_model(&crate::io::ModelSource::from_text(src)).unwrap();
        let gm = ground(&m).unwrap();
        assert!((gm.normalization().unwrap() - 8.0).abs() < 1e-12);

        let m = employee_model_seeded(42);
        let gm = ground(&m).unwrap();
        let z = gm.normalization().unwrap();
        let brute = brute_force_z(&gm);
        assert!(((z - brute) / brute).abs() <= 1e-10, "{z} vs {brute}");
    }

    #[test]
    fn joint_is_symmetric_under_constant_swap() {
        // Swapping alice and bob in an assignment leaves the probability
        // unchanged because all groundings share their tables.
        let m = employee_model_seeded(42);
        let gm = ground(&m).unwrap();
        let comp_a = gm.atom_id_by_name("Comp(alice)").unwrap();
        let comp_b = gm.atom_id_by_name("Comp(bob)").unwrap();
        let sal_a = gm.atom_id_by_name("Sal(alice)").unwrap();
        let sal_b = gm.atom_id_by_name("Sal(bob)").unwrap();
        for a in gm.assignments().take(200) {
            let mut swapped = a.clone();
            swapped.0.swap(comp_a, comp_b);
            swapped.0.swap(sal_a, sal_b);
            let pa = gm.joint_probability(&a).unwrap();
            let pb = gm.joint_probability(&swapped).unwrap();
            assert!((pa - pb).abs() <= 1e-15);
        }
    }

    #[test]
    fn ground_cycle_is_rejected() {
        let src = "prv A() range {f,t}\nprv B() range {f,t}\n\
                   parfactor g1(A(),->B()) uniform\nparfactor g2(B(),->A()) uniform\n";
        let m = crate::io::parse_model(&crate::io::ModelSource::from_text(src)).unwrap();
        assert!(ground(&m).is_err());
    }
}
