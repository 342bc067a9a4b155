//! Exact observational inference by variable elimination.
//!
//! Factors are dense tables over atom scopes. Elimination uses a min-degree
//! order with atom-id tie-breaking so that repeated runs produce identical
//! results. Conditional distributions are always derived from the joint;
//! tables in the model are arbitrary positive local functions, never
//! conditional tables.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::ground::{AtomId, GroundModel};
#[cfg(test)]
use crate::ground::Assignment;
use crate::model::{cartesian, row_major_index, PrvId};

/// Evidence: at most one observed value per atom.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence(pub BTreeMap<AtomId, usize>);

impl Evidence {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (AtomId, usize)>) -> Self {
        Evidence(pairs.into_iter().collect())
    }
}

/// A normalised distribution over one or more query atoms, row-major over
/// their ranges in query order.
#[derive(Debug, Clone)]
pub struct Distribution {
    pub atoms: Vec<AtomId>,
    /// PRV of each atom, kept for rendering range values.
    pub atoms_prvs: Vec<PrvId>,
    pub cards: Vec<usize>,
    pub probs: Vec<f64>,
}

impl Distribution {
    /// Iterates `(value tuple, probability)` pairs in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        cartesian(&self.cards)
            .into_iter()
            .zip(self.probs.iter().copied())
    }

    pub fn prob(&self, tuple: &[usize]) -> f64 {
        self.probs[row_major_index(tuple, &self.cards)]
    }

    /// Largest absolute difference to another distribution over the same
    /// query. Returns infinity when the shapes differ.
    pub fn linf(&self, other: &Distribution) -> f64 {
        if self.probs.len() != other.probs.len() {
            return f64::INFINITY;
        }
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Dense factor over a sorted scope of atoms.
#[derive(Debug, Clone)]
pub(crate) struct Table {
    pub scope: Vec<AtomId>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Table {
    fn constant(v: f64) -> Table {
        Table {
            scope: vec![],
            cards: vec![],
            values: vec![v],
        }
    }

    /// Builds a table from a ground factor, dropping evidence atoms by
    /// slicing the table at their observed values.
    pub(crate) fn from_factor(
        gm: &GroundModel,
        atoms: &[AtomId],
        table: &[f64],
        ev: &Evidence,
    ) -> Table {
        let keep: Vec<usize> = (0..atoms.len())
            .filter(|i| !ev.0.contains_key(&atoms[*i]))
            .collect();
        let cards_full: Vec<usize> = atoms.iter().map(|&a| gm.atoms[a].range.len()).collect();
        let scope: Vec<AtomId> = keep.iter().map(|&i| atoms[i]).collect();
        let cards: Vec<usize> = keep.iter().map(|&i| cards_full[i]).collect();
        let mut values = Vec::with_capacity(cards.iter().product());
        let mut full = vec![0usize; atoms.len()];
        for tuple in cartesian(&cards) {
            for (k, &i) in keep.iter().enumerate() {
                full[i] = tuple[k];
            }
            for (i, &a) in atoms.iter().enumerate() {
                if let Some(&v) = ev.0.get(&a) {
                    full[i] = v;
                }
            }
            values.push(table[row_major_index(&full, &cards_full)]);
        }
        Table {
            scope,
            cards,
            values,
        }
    }

    fn position(&self, atom: AtomId) -> Option<usize> {
        self.scope.iter().position(|&a| a == atom)
    }

    fn multiply(&self, other: &Table) -> Table {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (i, &a) in other.scope.iter().enumerate() {
            if !scope.contains(&a) {
                scope.push(a);
                cards.push(other.cards[i]);
            }
        }
        let self_pos: Vec<usize> = self.scope.iter().map(|a| scope.iter().position(|b| b == a).unwrap()).collect();
        let other_pos: Vec<usize> = other.scope.iter().map(|a| scope.iter().position(|b| b == a).unwrap()).collect();
        let mut values = Vec::with_capacity(cards.iter().product());
        let mut st = vec![0usize; self.scope.len()];
        let mut ot = vec![0usize; other.scope.len()];
        for tuple in cartesian(&cards) {
            for (i, &p) in self_pos.iter().enumerate() {
                st[i] = tuple[p];
            }
            for (i, &p) in other_pos.iter().enumerate() {
                ot[i] = tuple[p];
            }
            values.push(
                self.values[row_major_index(&st, &self.cards)]
                    * other.values[row_major_index(&ot, &other.cards)],
            );
        }
        Table {
            scope,
            cards,
            values,
        }
    }

    fn sum_out(&self, atom: AtomId) -> Table {
        let Some(pos) = self.position(atom) else {
            return self.clone();
        };
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        let card = cards.remove(pos);
        let mut values = vec![0.0; cards.iter().product::<usize>().max(1)];
        let mut full = vec![0usize; self.scope.len()];
        for (idx, tuple) in cartesian(&cards).iter().enumerate() {
            for (i, &t) in tuple.iter().enumerate() {
                full[if i < pos { i } else { i + 1 }] = t;
            }
            let mut s = 0.0;
            for v in 0..card {
                full[pos] = v;
                s += self.values[row_major_index(&full, &self.cards)];
            }
            values[idx] = s;
        }
        Table {
            scope,
            cards,
            values,
        }
    }

    fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// Reorders the scope to `target` (a permutation of the current scope).
    fn permuted(&self, target: &[AtomId]) -> Table {
        let pos: Vec<usize> = target
            .iter()
            .map(|a| self.position(*a).expect("permutation of scope"))
            .collect();
        let cards: Vec<usize> = pos.iter().map(|&p| self.cards[p]).collect();
        let mut values = Vec::with_capacity(self.values.len());
        let mut src = vec![0usize; self.scope.len()];
        for tuple in cartesian(&cards) {
            for (i, &p) in pos.iter().enumerate() {
                src[p] = tuple[i];
            }
            values.push(self.values[row_major_index(&src, &self.cards)]);
        }
        Table {
            scope: target.to_vec(),
            cards,
            values,
        }
    }
}

/// Min-degree elimination order over the atoms in `vars`, with atom-id
/// tie-breaking. `scopes` lists each factor's scope.
fn min_degree_order(vars: &BTreeSet<AtomId>, scopes: &[Vec<AtomId>]) -> Vec<AtomId> {
    let mut neighbours: BTreeMap<AtomId, BTreeSet<AtomId>> =
        vars.iter().map(|&v| (v, BTreeSet::new())).collect();
    for scope in scopes {
        for &a in scope {
            if !vars.contains(&a) {
                continue;
            }
            for &b in scope {
                if b != a && vars.contains(&b) {
                    neighbours.get_mut(&a).unwrap().insert(b);
                }
            }
        }
    }
    let mut order = Vec::with_capacity(vars.len());
    let mut remaining: BTreeSet<AtomId> = vars.clone();
    while !remaining.is_empty() {
        // Smallest degree, then smallest atom id.
        let &next = remaining
            .iter()
            .min_by_key(|&&v| (neighbours[&v].len(), v))
            .unwrap();
        let nbs: Vec<AtomId> = neighbours[&next].iter().copied().collect();
        for &a in &nbs {
            for &b in &nbs {
                if a != b {
                    neighbours.get_mut(&a).unwrap().insert(b);
                }
            }
            neighbours.get_mut(&a).unwrap().remove(&next);
        }
        neighbours.remove(&next);
        remaining.remove(&next);
        order.push(next);
    }
    order
}

/// Whether the running product of all factor tables risks leaving the
/// double range, judged from per-table extrema.
fn needs_rescaling(tables: &[Table]) -> bool {
    let mut log_max = 0.0f64;
    let mut log_min = 0.0f64;
    for t in tables {
        let mx = t.values.iter().cloned().fold(f64::MIN, f64::max);
        let mn = t.values.iter().cloned().fold(f64::MAX, f64::min);
        if mx > 0.0 {
            log_max += mx.ln();
        }
        if mn > 0.0 {
            log_min += mn.ln();
        }
    }
    !(-600.0..=600.0).contains(&log_max) || !(-600.0..=600.0).contains(&log_min)
}

/// Variable elimination keeping `keep`, with evidence already reduced into
/// the tables. Returns the final table over `keep` (scope order as in
/// `keep`) and an accumulated log-scale from any intermediate rescaling.
fn eliminate(
    gm: &GroundModel,
    keep: &[AtomId],
    ev: &Evidence,
    order_override: Option<&[AtomId]>,
) -> (Table, f64) {
    let tables: Vec<Table> = gm
        .factors
        .iter()
        .map(|f| Table::from_factor(gm, &f.atoms, &f.table, ev))
        .collect();
    let excluded: BTreeSet<AtomId> = ev.0.keys().copied().collect();
    eliminate_tables(gm, tables, keep, &excluded, order_override)
}

/// Variable elimination over an explicit factor list. `excluded` atoms are
/// treated as absent (already sliced out of the tables, e.g. clamped
/// intervention targets).
pub(crate) fn eliminate_tables(
    gm: &GroundModel,
    mut tables: Vec<Table>,
    keep: &[AtomId],
    excluded: &BTreeSet<AtomId>,
    order_override: Option<&[AtomId]>,
) -> (Table, f64) {
    let rescale = needs_rescaling(&tables);
    let mut log_scale = 0.0f64;

    let mut vars: BTreeSet<AtomId> = (0..gm.atoms.len()).collect();
    for k in keep {
        vars.remove(k);
    }
    for e in excluded {
        vars.remove(e);
    }
    let order: Vec<AtomId> = match order_override {
        Some(o) => o.to_vec(),
        None => {
            let scopes: Vec<Vec<AtomId>> = tables.iter().map(|t| t.scope.clone()).collect();
            min_degree_order(&vars, &scopes)
        }
    };

    for var in order {
        let (with, without): (Vec<Table>, Vec<Table>) =
            tables.into_iter().partition(|t| t.position(var).is_some());
        let mut product = Table::constant(1.0);
        for t in &with {
            product = product.multiply(t);
        }
        let mut summed = product.sum_out(var);
        if rescale {
            let m = summed.max_abs();
            if m > 0.0 {
                summed.scale(1.0 / m);
                log_scale += m.ln();
            }
        }
        tables = without;
        tables.push(summed);
    }

    let mut result = Table::constant(1.0);
    for t in &tables {
        result = result.multiply(t);
    }
    // Any atom still in scope but not requested (kept implicitly by having
    // no factor, or evidence artifacts) would be a bug; scope must now be a
    // subset of keep.
    debug_assert!(result.scope.iter().all(|a| keep.contains(a)));
    // Atoms in keep that appear in no factor get a uniform dimension.
    for &k in keep {
        if result.position(k).is_none() {
            let card = gm.atoms[k].range.len();
            result = result.multiply(&Table {
                scope: vec![k],
                cards: vec![card],
                values: vec![1.0; card],
            });
        }
    }
    (result.permuted(keep), log_scale)
}

/// The normalisation constant by variable elimination.
pub(crate) fn partition_function(gm: &GroundModel) -> Result<f64> {
    let (t, log_scale) = eliminate(gm, &[], &Evidence::default(), None);
    let z = t.values[0] * log_scale.exp();
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::NonFiniteNormalisation);
    }
    Ok(z)
}

pub(crate) fn distribution_from_table(
    gm: &GroundModel,
    atoms: &[AtomId],
    t: &Table,
) -> Result<Distribution> {
    let sum: f64 = t.values.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(Error::ZeroEvidenceProbability);
    }
    Ok(Distribution {
        atoms: atoms.to_vec(),
        atoms_prvs: atoms.iter().map(|&a| gm.atoms[a].atom.prv).collect(),
        cards: atoms.iter().map(|&a| gm.atoms[a].range.len()).collect(),
        probs: t.values.iter().map(|v| v / sum).collect(),
    })
}

/// `P(q | ev)` by variable elimination.
pub fn marginal(gm: &GroundModel, q: AtomId, ev: &Evidence) -> Result<Distribution> {
    marginal_joint(gm, &[q], ev)
}

/// Joint conditional distribution over several query atoms.
pub fn marginal_joint(gm: &GroundModel, qs: &[AtomId], ev: &Evidence) -> Result<Distribution> {
    for &q in qs {
        if q >= gm.atoms.len() {
            return Err(Error::UnknownAtom(format!("#{q}")));
        }
        if ev.0.contains_key(&q) {
            return Err(Error::Precondition(format!(
                "query atom `{}` also appears in the evidence",
                gm.atoms[q].name
            )));
        }
    }
    for (&a, &v) in &ev.0 {
        if a >= gm.atoms.len() {
            return Err(Error::UnknownAtom(format!("#{a}")));
        }
        if v >= gm.atoms[a].range.len() {
            return Err(Error::Precondition(format!(
                "evidence value out of range for `{}`",
                gm.atoms[a].name
            )));
        }
    }
    let (t, _) = eliminate(gm, qs, ev, None);
    distribution_from_table(gm, qs, &t)
}

/// `P(r | pa)` for a fully directed model, where `pa` assigns exactly the
/// parents of `r`. Computed from the joint, not read off a factor table.
pub fn conditional_given_parents(
    gm: &GroundModel,
    r: AtomId,
    pa: &Evidence,
) -> Result<Distribution> {
    if !gm.is_fully_directed() {
        return Err(Error::Precondition(
            "conditional_given_parents requires a fully directed model".into(),
        ));
    }
    let parents = gm.parents_of(r);
    let given: Vec<AtomId> = pa.0.keys().copied().collect();
    if parents != given {
        return Err(Error::Precondition(format!(
            "parent assignment for `{}` must cover exactly its parents",
            gm.atoms[r].name
        )));
    }
    marginal(gm, r, pa)
}

/// Full conditional table `P(r | parents(r))` for every parent
/// configuration, row-major over `[parents..., r]`. Used to assemble the
/// factorisation consumed by intervention queries.
pub(crate) fn cpt(gm: &GroundModel, r: AtomId) -> Result<CptTable> {
    let parents = gm.parents_of(r);
    let mut keep = parents.clone();
    keep.push(r);
    let (t, _) = eliminate(gm, &keep, &Evidence::default(), None);
    let r_card = gm.atoms[r].range.len();
    let mut values = t.values;
    for row in values.chunks_mut(r_card) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            for v in row {
                *v /= s;
            }
        }
    }
    Ok(CptTable {
        parents,
        child: r,
        values,
    })
}

/// `P(child | parents)` as a dense table, row-major over parents then child.
#[derive(Debug, Clone)]
pub(crate) struct CptTable {
    pub parents: Vec<AtomId>,
    pub child: AtomId,
    pub values: Vec<f64>,
}

impl CptTable {
    /// Looks up `P(child = value | parent values)` from a total assignment.
    #[cfg(test)]
    pub fn prob(&self, gm: &GroundModel, a: &Assignment) -> f64 {
        let mut tuple: Vec<usize> = self.parents.iter().map(|&p| a.0[p]).collect();
        tuple.push(a.0[self.child]);
        let mut dims: Vec<usize> = self
            .parents
            .iter()
            .map(|&p| gm.atoms[p].range.len())
            .collect();
        dims.push(gm.atoms[self.child].range.len());
        self.values[row_major_index(&tuple, &dims)]
    }
}

/// Variable elimination with a caller-supplied order, for the
/// order-independence tests.
#[cfg(test)]
pub(crate) fn marginal_with_order(
    gm: &GroundModel,
    q: AtomId,
    ev: &Evidence,
    order: &[AtomId],
) -> Result<Distribution> {
    let (t, _) = eliminate(gm, &[q], ev, Some(order));
    distribution_from_table(gm, &[q], &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{employee_model, employee_model_seeded, random_model, RandomStyle};
    use crate::ground::ground;

    /// Exhaustive-enumeration reference for conditional marginals.
    pub(crate) fn brute_marginal(
        gm: &GroundModel,
        qs: &[AtomId],
        ev: &Evidence,
    ) -> Vec<f64> {
        let cards: Vec<usize> = qs.iter().map(|&q| gm.atoms[q].range.len()).collect();
        let mut probs = vec![0.0; cards.iter().product()];
        for a in gm.assignments() {
            if ev.0.iter().any(|(&e, &v)| a.0[e] != v) {
                continue;
            }
            let tuple: Vec<usize> = qs.iter().map(|&q| a.0[q]).collect();
            probs[row_major_index(&tuple, &cards)] += gm.unnormalized_weight(&a);
        }
        let s: f64 = probs.iter().sum();
        probs.iter().map(|p| p / s).collect()
    }

    #[test]
    fn uniform_employee_marginal_is_uniform() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        let rev = gm.atom_id_by_name("Rev").unwrap();
        let d = marginal(&gm, rev, &Evidence::default()).unwrap();
        for p in &d.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_marginal_matches_enumeration() {
        let m = employee_model_seeded(42);
        let gm = ground(&m).unwrap();
        let rev = gm.atom_id_by_name("Rev").unwrap();
        let comp_a = gm.atom_id_by_name("Comp(alice)").unwrap();
        let ev = Evidence::from_pairs([(comp_a, 2)]);
        let d = marginal(&gm, rev, &ev).unwrap();
        let brute = brute_marginal(&gm, &[rev], &ev);
        for (a, b) in d.probs.iter().zip(&brute) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
        let sum: f64 = d.probs.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ve_matches_enumeration_on_random_models() {
        for seed in 0..12 {
            let style = match seed % 3 {
                0 => RandomStyle::Mixed,
                1 => RandomStyle::DirectedCpt,
                _ => RandomStyle::Undirected,
            };
            let mut m = random_model(seed, style, 9, 5);
            crate::fixtures::apply_seed_potentials(&mut m, seed + 1000);
            let gm = ground(&m).unwrap();
            for q in 0..gm.atoms.len() {
                let ev = if q + 1 < gm.atoms.len() {
                    Evidence::from_pairs([(q + 1, 0)])
                } else {
                    Evidence::default()
                };
                let d = marginal(&gm, q, &ev).unwrap();
                let brute = brute_marginal(&gm, &[q], &ev);
                for (a, b) in d.probs.iter().zip(&brute) {
                    let rel = (a - b).abs() / b.abs().max(1e-300);
                    assert!(rel <= 1e-10, "seed {seed} atom {q}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn elimination_order_independence() {
        let m = employee_model_seeded(42);
        let gm = ground(&m).unwrap();
        let rev = gm.atom_id_by_name("Rev").unwrap();
        let base = marginal(&gm, rev, &Evidence::default()).unwrap();
        let mut others: Vec<AtomId> = (0..gm.atoms.len()).filter(|&a| a != rev).collect();
        let forward = others.clone();
        others.reverse();
        for order in [forward, others] {
            let d = marginal_with_order(&gm, rev, &Evidence::default(), &order).unwrap();
            assert!(base.linf(&d) <= 1e-10);
        }
    }

    #[test]
    fn query_in_evidence_is_rejected() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        let rev = gm.atom_id_by_name("Rev").unwrap();
        let ev = Evidence::from_pairs([(rev, 0)]);
        assert!(marginal(&gm, rev, &ev).is_err());
    }

    #[test]
    fn parentless_conditional_is_uniform_on_uniform_model() {
        let m = employee_model();
        let gm = ground(&m).unwrap();
        let comp_a = gm.atom_id_by_name("Comp(alice)").unwrap();
        // Not fully directed yet: direct the g1 copies toward Comp first.
        let mut gm2 = gm.clone();
        for f in &mut gm2.factors {
            if f.child.is_none() {
                f.child = Some(0);
            }
        }
        let parents = gm2.parents_of(comp_a);
        let ev = Evidence::from_pairs(parents.iter().map(|&p| (p, 0)));
        let d = conditional_given_parents(&gm2, comp_a, &ev).unwrap();
        for p in &d.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_chain_conditional_is_normalised_row() {
        let src = "prv A() range {f,t}\nprv B() range {f,t}\n\
                   parfactor g(A(),->B()) table {\n(f,f)=1.0\n(f,t)=3.0\n(t,f)=2.0\n(t,t)=2.0\n}\n";
        let m = crate::io::parse_model(&crate::io::ModelSource::from_text(src)).unwrap();
        let gm = ground(&m).unwrap();
        let a = gm.atom_id_by_name("A").unwrap();
        let b = gm.atom_id_by_name("B").unwrap();
        let d = conditional_given_parents(&gm, b, &Evidence::from_pairs([(a, 0)])).unwrap();
        assert!((d.probs[0] - 0.25).abs() < 1e-12);
        assert!((d.probs[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn seeded_conditional_matches_enumeration() {
        let m = employee_model_seeded(42);
        let gm = ground(&m).unwrap();
        // Direct g1 copies as Rev -> Comp so the model is fully directed.
        let mut gm2 = gm.clone();
        for f in &mut gm2.factors {
            if f.child.is_none() {
                f.child = Some(0);
            }
        }
        let sal_a = gm2.atom_id_by_name("Sal(alice)").unwrap();
        let rev = gm2.atom_id_by_name("Rev").unwrap();
        let comp_a = gm2.atom_id_by_name("Comp(alice)").unwrap();
        let ev = Evidence::from_pairs([(rev, 0), (comp_a, 2)]);
        let d = conditional_given_parents(&gm2, sal_a, &ev).unwrap();
        let brute = brute_marginal(&gm2, &[sal_a], &ev);
        for (a, b) in d.probs.iter().zip(&brute) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn incomplete_parent_assignment_is_rejected() {
        let m = employee_model_seeded(1);
        let gm = ground(&m).unwrap();
        let mut gm2 = gm.clone();
        for f in &mut gm2.factors {
            if f.child.is_none() {
                f.child = Some(0);
            }
        }
        let sal_a = gm2.atom_id_by_name("Sal(alice)").unwrap();
        let rev = gm2.atom_id_by_name("Rev").unwrap();
        let ev = Evidence::from_pairs([(rev, 0)]);
        assert!(conditional_given_parents(&gm2, sal_a, &ev).is_err());
    }

    #[test]
    fn chain_rule_reproduces_joint_on_directed_models() {
        // Fully directed employee variant plus CPT-style random models: for
        // these the directed graph is an independence map of the joint, so
        // the product of conditionals recovers it.
        let mut models = vec![];
        let mut m = employee_model_seeded(42);
        for pf in &mut m.parfactors {
            if pf.name == "g1" {
                pf.edge_dirs[0] = crate::model::EdgeDir::Child;
            }
        }
        models.push(m);
        for seed in [3, 4] {
            let mut m = random_model(seed, RandomStyle::DirectedCpt, 8, 0);
            crate::fixtures::apply_seed_potentials(&mut m, seed);
            models.push(m);
        }
        for m in models {
            let gm = ground(&m).unwrap();
            assert!(gm.is_fully_directed());
            let cpts: Vec<CptTable> = (0..gm.atoms.len())
                .map(|r| cpt(&gm, r).unwrap())
                .collect();
            for a in gm.assignments() {
                let joint = gm.joint_probability(&a).unwrap();
                let product: f64 = cpts.iter().map(|c| c.prob(&gm, &a)).product();
                assert!(
                    (joint - product).abs() <= 1e-9,
                    "chain rule broken: {joint} vs {product}"
                );
            }
        }
    }
}
