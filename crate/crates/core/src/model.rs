//! Model types: logical variables, parameterised random variables (PRVs),
//! parfactors, and the partially directed parametric factor graph they form.
//!
//! A model is a bipartite graph of variable nodes (PRVs) and factor nodes
//! (parfactors). Each factor-variable edge is either undirected or directed
//! towards the variable; a directed edge marks the variable as the effect of
//! the factor's remaining arguments. Potentials are arbitrary positive
//! functions, so the probabilistic semantics (a normalised product over all
//! groundings) is independent of the edge directions.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Index of a logical variable in [`Model::logvars`].
pub type LogVarId = usize;
/// Index of a PRV in [`Model::prvs`].
pub type PrvId = usize;
/// Index of a parfactor in [`Model::parfactors`].
pub type ParfactorId = usize;

/// A typed logical variable with a finite, ordered domain of constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LogVar {
    pub name: String,
    pub domain: Vec<String>,
}

/// A parameterised random variable: a named template over logical variables
/// with a finite, ordered range of values. With no parameters it is an
/// ordinary propositional variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Prv {
    pub name: String,
    pub params: Vec<LogVarId>,
    pub range: Vec<String>,
}

/// Tuple set of a constraint: the full cross product, or an explicit set of
/// constant-index tuples kept sorted in row-major domain order.
#[derive(Debug, Clone, PartialEq)]
pub enum Tuples {
    Top,
    Explicit(Vec<Vec<usize>>),
}

/// Restriction of a sequence of logical variables to a subset of their
/// cross product. Constants are stored as indices into the domains.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub logvars: Vec<LogVarId>,
    pub tuples: Tuples,
}

/// Direction of one factor-variable edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDir {
    Undirected,
    Child,
}

/// A parfactor: a dense potential table over a sequence of PRVs under a
/// constraint. `edge_dirs[i] == Child` marks argument `i` as the effect of
/// the remaining arguments; a valid model has at most one such mark per
/// factor. The table is row-major over the argument ranges in declaration
/// order and is shared (`Arc`) between factors produced by splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Parfactor {
    pub name: String,
    pub args: Vec<PrvId>,
    pub edge_dirs: Vec<EdgeDir>,
    pub table: Arc<Vec<f64>>,
    pub constraint: Constraint,
}

impl Parfactor {
    /// Index of the argument marked as child, if any.
    pub fn child_arg(&self) -> Option<usize> {
        self.edge_dirs.iter().position(|d| *d == EdgeDir::Child)
    }

    /// True when no argument is marked as child.
    pub fn is_fully_undirected(&self) -> bool {
        self.child_arg().is_none()
    }
}

/// A ground instance of a PRV: the PRV plus one constant per parameter
/// (constants as indices into the respective logvar domains).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub prv: PrvId,
    pub args: Vec<usize>,
}

/// Severity of a validation issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

/// One violated invariant, with a human-readable location.
#[derive(Debug, Clone)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
    pub location: String,
}

/// Outcome of [`Model::validate`]. `ok()` holds exactly when no issue has
/// severity [`Severity::Error`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        !self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    fn error(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            message: message.into(),
            location: location.into(),
        });
    }

    fn warning(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            message: message.into(),
            location: location.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "ok");
        }
        for issue in &self.issues {
            let tag = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{}: {}: {}", tag, issue.location, issue.message)?;
        }
        Ok(())
    }
}

/// A partially directed parametric factor graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Model {
    pub logvars: Vec<LogVar>,
    pub prvs: Vec<Prv>,
    pub parfactors: Vec<Parfactor>,
}

impl Model {
    /// Looks up a logical variable by name.
    pub fn find_logvar(&self, name: &str) -> Option<LogVarId> {
        self.logvars.iter().position(|l| l.name == name)
    }

    /// Looks up a PRV by name and arity.
    pub fn find_prv(&self, name: &str, arity: usize) -> Option<PrvId> {
        self.prvs
            .iter()
            .position(|p| p.name == name && p.params.len() == arity)
    }

    /// Index of a constant within a logvar's domain.
    pub fn constant_index(&self, lv: LogVarId, constant: &str) -> Option<usize> {
        self.logvars[lv].domain.iter().position(|c| c == constant)
    }

    /// Index of a value within a PRV's range.
    pub fn range_index(&self, prv: PrvId, value: &str) -> Option<usize> {
        self.prvs[prv].range.iter().position(|v| v == value)
    }

    /// Renders a ground atom as `Name(c1,...,cn)`, or a bare name for
    /// parameterless PRVs.
    pub fn atom_name(&self, atom: &GroundAtom) -> String {
        let prv = &self.prvs[atom.prv];
        if atom.args.is_empty() {
            return prv.name.clone();
        }
        let args: Vec<&str> = atom
            .args
            .iter()
            .zip(&prv.params)
            .map(|(&c, &lv)| self.logvars[lv].domain[c].as_str())
            .collect();
        format!("{}({})", prv.name, args.join(","))
    }

    /// All instance tuples of a PRV in row-major domain order.
    pub fn prv_instances(&self, prv: PrvId) -> Vec<Vec<usize>> {
        let dims: Vec<usize> = self.prvs[prv]
            .params
            .iter()
            .map(|&lv| self.logvars[lv].domain.len())
            .collect();
        cartesian(&dims)
    }

    /// The logical variables of a parfactor's argument list, ordered by
    /// first occurrence.
    pub fn parfactor_logvars(&self, pf: &Parfactor) -> Vec<LogVarId> {
        let mut seen = Vec::new();
        for &arg in &pf.args {
            if let Some(prv) = self.prvs.get(arg) {
                for &lv in &prv.params {
                    if !seen.contains(&lv) {
                        seen.push(lv);
                    }
                }
            }
        }
        seen
    }

    /// Materialises a parfactor's constraint as an explicit tuple list in
    /// row-major domain order.
    pub fn constraint_tuples(&self, c: &Constraint) -> Vec<Vec<usize>> {
        match &c.tuples {
            Tuples::Explicit(t) => t.clone(),
            Tuples::Top => {
                let dims: Vec<usize> = c
                    .logvars
                    .iter()
                    .map(|&lv| self.logvars[lv].domain.len())
                    .collect();
                cartesian(&dims)
            }
        }
    }

    /// Number of groundings of a parfactor.
    pub fn grounding_count(&self, pf: &Parfactor) -> usize {
        match &pf.constraint.tuples {
            Tuples::Explicit(t) => t.len(),
            Tuples::Top => pf
                .constraint
                .logvars
                .iter()
                .map(|&lv| self.logvars[lv].domain.len())
                .product(),
        }
    }

    /// Parents of a PRV: variables tied undirected to some factor whose
    /// child is `a`.
    pub fn parents(&self, a: PrvId) -> Result<BTreeSet<PrvId>> {
        self.check_prv(a)?;
        let mut out = BTreeSet::new();
        for pf in &self.parfactors {
            if let Some(ci) = pf.child_arg() {
                if pf.args[ci] == a {
                    out.extend(pf.args.iter().copied().filter(|&p| p != a));
                }
            }
        }
        Ok(out)
    }

    /// Children of a PRV: the duals of [`Model::parents`].
    pub fn children(&self, a: PrvId) -> Result<BTreeSet<PrvId>> {
        self.check_prv(a)?;
        let mut out = BTreeSet::new();
        for pf in &self.parfactors {
            if let Some(ci) = pf.child_arg() {
                if pf.args[ci] != a && pf.args.contains(&a) {
                    out.insert(pf.args[ci]);
                }
            }
        }
        Ok(out)
    }

    /// Undirected neighbours of a PRV: co-arguments across factors that
    /// carry no child mark at all. Co-parents of a directed factor are not
    /// neighbours; their mutual role is already fixed as joint causes of the
    /// factor's child.
    pub fn neighbours(&self, a: PrvId) -> Result<BTreeSet<PrvId>> {
        self.check_prv(a)?;
        let mut out = BTreeSet::new();
        for pf in &self.parfactors {
            if pf.is_fully_undirected() && pf.args.contains(&a) {
                out.extend(pf.args.iter().copied().filter(|&p| p != a));
            }
        }
        Ok(out)
    }

    fn check_prv(&self, a: PrvId) -> Result<()> {
        if a >= self.prvs.len() {
            return Err(Error::UnknownPrv(format!("#{a}")));
        }
        Ok(())
    }

    /// Edges of the directed projection: `(cause, effect)` whenever some
    /// parfactor ties `cause` undirected and marks `effect` as child.
    pub fn directed_projection(&self) -> Vec<(PrvId, PrvId)> {
        let mut edges = BTreeSet::new();
        for pf in &self.parfactors {
            if let Some(ci) = pf.child_arg() {
                let child = pf.args[ci];
                for (i, &arg) in pf.args.iter().enumerate() {
                    if i != ci {
                        edges.insert((arg, child));
                    }
                }
            }
        }
        edges.into_iter().collect()
    }

    /// Structural validation. Total: never panics on malformed input, and
    /// reports every violated invariant it can still reach.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();

        let mut names = HashSet::new();
        for lv in &self.logvars {
            let loc = format!("logvar {}", lv.name);
            if !names.insert(lv.name.clone()) {
                rep.error(&loc, "duplicate logvar name");
            }
            if lv.domain.is_empty() {
                rep.error(&loc, "domain is empty");
            }
            let mut seen = HashSet::new();
            for c in &lv.domain {
                if !seen.insert(c) {
                    rep.error(&loc, format!("duplicate constant `{c}` in domain"));
                }
            }
        }

        let mut sigs = HashSet::new();
        for prv in &self.prvs {
            let loc = format!("prv {}", prv.name);
            if !sigs.insert((prv.name.clone(), prv.params.len())) {
                rep.error(&loc, "duplicate PRV (same name and arity)");
            }
            if prv.range.is_empty() {
                rep.error(&loc, "range is empty");
            }
            let mut seen = HashSet::new();
            for v in &prv.range {
                if !seen.insert(v) {
                    rep.error(&loc, format!("duplicate range value `{v}`"));
                }
            }
            for &lv in &prv.params {
                if lv >= self.logvars.len() {
                    rep.error(&loc, format!("parameter references unknown logvar #{lv}"));
                }
            }
        }

        let mut pf_names = HashSet::new();
        let mut used_prvs = HashSet::new();
        for pf in &self.parfactors {
            let loc = format!("parfactor {}", pf.name);
            if !pf_names.insert(pf.name.clone()) {
                rep.error(&loc, "duplicate parfactor name");
            }
            if pf.args.is_empty() {
                rep.error(&loc, "argument list is empty");
                continue;
            }
            if pf.edge_dirs.len() != pf.args.len() {
                rep.error(&loc, "edge direction list does not match argument list");
                continue;
            }
            let mut bad_ref = false;
            for &arg in &pf.args {
                if arg >= self.prvs.len() {
                    rep.error(&loc, format!("argument references unknown PRV #{arg}"));
                    bad_ref = true;
                } else {
                    used_prvs.insert(arg);
                }
            }
            if bad_ref {
                continue;
            }
            let mut arg_set = HashSet::new();
            for &arg in &pf.args {
                if !arg_set.insert(arg) {
                    rep.error(
                        &loc,
                        format!(
                            "PRV `{}` occurs more than once in the argument list",
                            self.prvs[arg].name
                        ),
                    );
                }
            }
            let child_count = pf
                .edge_dirs
                .iter()
                .filter(|d| **d == EdgeDir::Child)
                .count();
            if child_count > 1 {
                rep.error(
                    &loc,
                    format!("{child_count} arguments marked as child; at most one is allowed"),
                );
            }
            let expected: usize = pf
                .args
                .iter()
                .map(|&a| self.prvs[a].range.len())
                .product();
            if pf.table.len() != expected {
                rep.error(
                    &loc,
                    format!(
                        "table has {} entries, expected {} (product of argument ranges)",
                        pf.table.len(),
                        expected
                    ),
                );
            }
            if pf.table.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                rep.error(&loc, "potentials must be finite and strictly positive");
            }

            let expected_lvs = self.parfactor_logvars(pf);
            if pf.constraint.logvars != expected_lvs {
                rep.error(
                    &loc,
                    "constraint logvars do not match the argument logvars",
                );
            }
            if let Tuples::Explicit(tuples) = &pf.constraint.tuples {
                if tuples.is_empty() {
                    rep.warning(&loc, "constraint has no tuples; factor has no groundings");
                }
                let mut seen = HashSet::new();
                for t in tuples {
                    if t.len() != pf.constraint.logvars.len() {
                        rep.error(&loc, "constraint tuple arity mismatch");
                        continue;
                    }
                    for (i, &c) in t.iter().enumerate() {
                        let lv = pf.constraint.logvars[i];
                        if lv >= self.logvars.len() || c >= self.logvars[lv].domain.len() {
                            rep.error(&loc, "constraint tuple constant out of domain");
                        }
                    }
                    if !seen.insert(t.clone()) {
                        rep.error(&loc, "duplicate constraint tuple");
                    }
                }
            }
        }

        for (i, prv) in self.prvs.iter().enumerate() {
            if !used_prvs.contains(&i) {
                rep.error(
                    format!("prv {}", prv.name),
                    "does not appear in any parfactor",
                );
            }
        }

        if let Some(cycle) = self.find_directed_cycle() {
            let path: Vec<&str> = cycle
                .iter()
                .filter_map(|&p| self.prvs.get(p).map(|x| x.name.as_str()))
                .collect();
            rep.error("model", format!("directed cycle: {}", path.join(" -> ")));
        }

        rep
    }

    /// Finds a cycle in the directed projection, returned as a node path
    /// whose first and last element coincide.
    pub fn find_directed_cycle(&self) -> Option<Vec<PrvId>> {
        let n = self.prvs.len();
        let mut adj: Vec<Vec<PrvId>> = vec![Vec::new(); n];
        for (a, b) in self.directed_projection() {
            if a < n && b < n {
                adj[a].push(b);
            }
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut stack = Vec::new();
        fn dfs(
            v: usize,
            adj: &[Vec<usize>],
            state: &mut [u8],
            stack: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            state[v] = 1;
            stack.push(v);
            for &w in &adj[v] {
                if state[w] == 1 {
                    let start = stack.iter().position(|&x| x == w).unwrap();
                    let mut cycle: Vec<usize> = stack[start..].to_vec();
                    cycle.push(w);
                    return Some(cycle);
                }
                if state[w] == 0 {
                    if let Some(c) = dfs(w, adj, state, stack) {
                        return Some(c);
                    }
                }
            }
            stack.pop();
            state[v] = 2;
            None
        }
        for v in 0..n {
            if state[v] == 0 {
                if let Some(c) = dfs(v, &adj, &mut state, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Resolves a rendered atom such as `Comp(alice)` or `Rev` against the
    /// model's declarations.
    pub fn resolve_atom(&self, name: &str, constants: &[&str]) -> Result<GroundAtom> {
        let prv = self
            .find_prv(name, constants.len())
            .ok_or_else(|| Error::UnknownPrv(format!("{}/{}", name, constants.len())))?;
        let mut args = Vec::with_capacity(constants.len());
        for (i, c) in constants.iter().enumerate() {
            let lv = self.prvs[prv].params[i];
            let idx = self
                .constant_index(lv, c)
                .ok_or_else(|| Error::UnknownAtom(format!("{}({})", name, constants.join(","))))?;
            args.push(idx);
        }
        Ok(GroundAtom { prv, args })
    }
}

/// Enumerates index tuples over `dims` in row-major order. An empty `dims`
/// yields the single empty tuple.
pub fn cartesian(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut tuple = vec![0usize; dims.len()];
    if dims.iter().any(|&d| d == 0) {
        return out;
    }
    loop {
        out.push(tuple.clone());
        let mut i = dims.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            tuple[i] += 1;
            if tuple[i] < dims[i] {
                break;
            }
            tuple[i] = 0;
        }
    }
}

/// Row-major index of a value tuple with the given dimensions.
pub fn row_major_index(tuple: &[usize], dims: &[usize]) -> usize {
    let mut idx = 0;
    for (t, d) in tuple.iter().zip(dims) {
        idx = idx * d + t;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::employee_model;

    fn prv(m: &Model, name: &str) -> PrvId {
        m.prvs.iter().position(|p| p.name == name).unwrap()
    }

    #[test]
    fn employee_model_validates() {
        let m = employee_model();
        let rep = m.validate();
        assert!(rep.ok(), "unexpected issues: {rep}");
    }

    #[test]
    fn directed_cycle_is_reported() {
        let mut m = Model::default();
        m.prvs.push(Prv {
            name: "A".into(),
            params: vec![],
            range: vec!["f".into(), "t".into()],
        });
        m.prvs.push(Prv {
            name: "B".into(),
            params: vec![],
            range: vec!["f".into(), "t".into()],
        });
        let table = Arc::new(vec![1.0; 4]);
        m.parfactors.push(Parfactor {
            name: "g1".into(),
            args: vec![0, 1],
            edge_dirs: vec![EdgeDir::Undirected, EdgeDir::Child],
            table: table.clone(),
            constraint: Constraint {
                logvars: vec![],
                tuples: Tuples::Top,
            },
        });
        m.parfactors.push(Parfactor {
            name: "g2".into(),
            args: vec![1, 0],
            edge_dirs: vec![EdgeDir::Undirected, EdgeDir::Child],
            table,
            constraint: Constraint {
                logvars: vec![],
                tuples: Tuples::Top,
            },
        });
        let rep = m.validate();
        assert!(!rep.ok());
        assert!(rep
            .issues
            .iter()
            .any(|i| i.message.contains("directed cycle")));
    }

    #[test]
    fn two_children_is_an_error() {
        let mut m = Model::default();
        m.prvs.push(Prv {
            name: "A".into(),
            params: vec![],
            range: vec!["f".into(), "t".into()],
        });
        m.prvs.push(Prv {
            name: "B".into(),
            params: vec![],
            range: vec!["f".into(), "t".into()],
        });
        m.parfactors.push(Parfactor {
            name: "g".into(),
            args: vec![0, 1],
            edge_dirs: vec![EdgeDir::Child, EdgeDir::Child],
            table: Arc::new(vec![1.0; 4]),
            constraint: Constraint {
                logvars: vec![],
                tuples: Tuples::Top,
            },
        });
        let rep = m.validate();
        assert!(!rep.ok());
        assert!(rep.issues.iter().any(|i| i.message.contains("child")));
    }

    #[test]
    fn adjacency_on_employee_model() {
        let m = employee_model();
        let comp = prv(&m, "Comp");
        let sal = prv(&m, "Sal");
        let rev = prv(&m, "Rev");

        let parents_sal = m.parents(sal).unwrap();
        assert_eq!(parents_sal, BTreeSet::from([comp, rev]));
        assert_eq!(m.neighbours(comp).unwrap(), BTreeSet::from([rev]));
        assert!(m.neighbours(sal).unwrap().is_empty());
        assert_eq!(m.children(rev).unwrap(), BTreeSet::from([sal]));
        assert!(m.parents(comp).unwrap().is_empty());
    }

    #[test]
    fn adjacency_duality_and_symmetry() {
        let m = employee_model();
        for a in 0..m.prvs.len() {
            for b in 0..m.prvs.len() {
                let pa = m.parents(a).unwrap().contains(&b);
                let cb = m.children(b).unwrap().contains(&a);
                assert_eq!(pa, cb, "parent/child duality broken for ({a},{b})");
                let nab = m.neighbours(a).unwrap().contains(&b);
                let nba = m.neighbours(b).unwrap().contains(&a);
                assert_eq!(nab, nba, "neighbour symmetry broken for ({a},{b})");
            }
        }
    }

    #[test]
    fn unknown_node_lookup_fails() {
        let m = employee_model();
        assert!(m.parents(99).is_err());
    }

    #[test]
    fn validate_is_total_on_broken_input() {
        let mut m = Model::default();
        m.parfactors.push(Parfactor {
            name: "g".into(),
            args: vec![7],
            edge_dirs: vec![EdgeDir::Undirected],
            table: Arc::new(vec![]),
            constraint: Constraint {
                logvars: vec![3],
                tuples: Tuples::Explicit(vec![vec![0, 1]]),
            },
        });
        let rep = m.validate();
        assert!(!rep.ok());
    }

    #[test]
    fn cartesian_row_major() {
        assert_eq!(
            cartesian(&[2, 2]),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        assert_eq!(cartesian(&[]), vec![Vec::<usize>::new()]);
        assert!(cartesian(&[2, 0]).is_empty());
    }
}
