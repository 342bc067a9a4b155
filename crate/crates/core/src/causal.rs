//! Interventional inference: identifiability tests, clique-constrained
//! parent-set enumeration over the split model, orientation to a fully
//! directed representative, and evaluation of the post-intervention
//! factorisation.
//!
//! An intervention fixes target variables and removes their incoming
//! influences. With undirected factors at a target the true parents are
//! unknown, so every realisable parent set contributes one candidate
//! distribution. Enumeration works on the lifted split model (one node per
//! target, however many groundings it covers); structural validity of an
//! orientation is judged on the ground projection, which is where the
//! separation semantics lives.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::ground::{ground, AtomId, GroundModel};
use crate::infer::{self, Distribution, Evidence};
use crate::model::{EdgeDir, GroundAtom, Model, Parfactor, PrvId};
use crate::shatter::{split_on_atoms, SplitTarget};

/// Distributions closer than this in L-infinity distance count as equal
/// when deduplicating candidate answers.
pub const DISTRIBUTION_EQ_TOL: f64 = 1e-9;

/// One intervention target before grounding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TargetRef {
    Atom(GroundAtom),
    /// A whole PRV; all groundings receive the same value.
    Prv(PrvId),
    /// A PRV restricted to an explicit instance set.
    Constrained(PrvId, Vec<Vec<usize>>),
}

impl TargetRef {
    pub fn prv(&self) -> PrvId {
        match self {
            TargetRef::Atom(a) => a.prv,
            TargetRef::Prv(p) | TargetRef::Constrained(p, _) => *p,
        }
    }

    pub fn render(&self, m: &Model) -> String {
        match self {
            TargetRef::Atom(a) => m.atom_name(a),
            TargetRef::Prv(p) => {
                let prv = &m.prvs[*p];
                if prv.params.is_empty() {
                    prv.name.clone()
                } else {
                    let params: Vec<&str> = prv
                        .params
                        .iter()
                        .map(|&lv| m.logvars[lv].name.as_str())
                        .collect();
                    format!("{}({})", prv.name, params.join(","))
                }
            }
            TargetRef::Constrained(p, set) => {
                SplitTarget::Slice(*p, set.clone()).render(m)
            }
        }
    }
}

/// An interventional query: `P(query | do(targets))`.
#[derive(Debug, Clone)]
pub struct DoQuery {
    pub query: Vec<GroundAtom>,
    pub targets: Vec<(TargetRef, usize)>,
}

/// A variable node of the split lifted graph: a whole PRV, or a PRV
/// restricted to a sorted instance set (a target or the remainder left by a
/// split).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum LiftedNode {
    Whole(PrvId),
    Slice(PrvId, Vec<Vec<usize>>),
}

impl LiftedNode {
    fn for_instances(m: &Model, prv: PrvId, mut instances: Vec<Vec<usize>>) -> LiftedNode {
        instances.sort();
        instances.dedup();
        if instances == m.prv_instances(prv) {
            LiftedNode::Whole(prv)
        } else {
            LiftedNode::Slice(prv, instances)
        }
    }

    pub fn prv(&self) -> PrvId {
        match self {
            LiftedNode::Whole(p) | LiftedNode::Slice(p, _) => *p,
        }
    }

    pub fn render(&self, m: &Model) -> String {
        match self {
            LiftedNode::Whole(p) => TargetRef::Prv(*p).render(m),
            LiftedNode::Slice(p, set) => {
                if set.len() == 1 {
                    m.atom_name(&GroundAtom {
                        prv: *p,
                        args: set[0].clone(),
                    })
                } else {
                    SplitTarget::Slice(*p, set.clone()).render(m)
                }
            }
        }
    }
}

/// One joint selection of parent sets: per target, the chosen subset of its
/// undirected neighbours in the split model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentChoice {
    pub per_target: Vec<(LiftedNode, BTreeSet<LiftedNode>)>,
}

impl ParentChoice {
    pub fn render(&self, m: &Model) -> String {
        let parts: Vec<String> = self
            .per_target
            .iter()
            .map(|(t, sel)| {
                let names: Vec<String> = sel.iter().map(|n| n.render(m)).collect();
                format!("{}<-{{{}}}", t.render(m), names.join(","))
            })
            .collect();
        parts.join("; ")
    }
}

/// One distinct post-intervention distribution with the parent choices that
/// produced it.
#[derive(Debug, Clone)]
pub struct DoResult {
    pub choices: Vec<ParentChoice>,
    pub distribution: Distribution,
}

/// All distinct post-intervention distributions for a query. `unique` holds
/// exactly when one distinct distribution remains after deduplication.
#[derive(Debug, Clone)]
pub struct DoAnswer {
    pub unique: bool,
    pub results: Vec<DoResult>,
}

/// A do-query resolved to ground target atoms.
#[derive(Debug, Clone)]
pub struct ResolvedDoQuery {
    pub query: Vec<GroundAtom>,
    pub ground_targets: Vec<(GroundAtom, usize)>,
    pub split_targets: Vec<SplitTarget>,
}

/// Expands PRV-level targets to their groundings and checks the query shape:
/// values in range, no duplicate targets, no overlap with the query term.
pub fn resolve_do_query(m: &Model, dq: &DoQuery) -> Result<ResolvedDoQuery> {
    if dq.query.is_empty() {
        return Err(Error::Precondition("query term is empty".into()));
    }
    for a in &dq.query {
        check_atom(m, a)?;
    }
    let mut ground_targets = Vec::new();
    let mut split_targets = Vec::new();
    let mut seen: HashSet<GroundAtom> = HashSet::new();
    for (tref, value) in &dq.targets {
        let prv = tref.prv();
        if prv >= m.prvs.len() {
            return Err(Error::UnknownPrv(format!("#{prv}")));
        }
        if *value >= m.prvs[prv].range.len() {
            return Err(Error::Precondition(format!(
                "target value out of range for `{}`",
                m.prvs[prv].name
            )));
        }
        let split = match tref {
            TargetRef::Atom(a) => {
                check_atom(m, a)?;
                SplitTarget::Atom(a.clone())
            }
            TargetRef::Prv(p) => SplitTarget::Slice(*p, m.prv_instances(*p)),
            TargetRef::Constrained(p, set) => SplitTarget::Slice(*p, set.clone()),
        };
        for inst in split.instances() {
            let atom = GroundAtom { prv, args: inst };
            check_atom(m, &atom)?;
            if !seen.insert(atom.clone()) {
                return Err(Error::DuplicateTarget(m.atom_name(&atom)));
            }
            ground_targets.push((atom, *value));
        }
        split_targets.push(split);
    }
    for q in &dq.query {
        if seen.contains(q) {
            return Err(Error::QueryTargetOverlap(m.atom_name(q)));
        }
    }
    Ok(ResolvedDoQuery {
        query: dq.query.clone(),
        ground_targets,
        split_targets,
    })
}

fn check_atom(m: &Model, a: &GroundAtom) -> Result<()> {
    if a.prv >= m.prvs.len() {
        return Err(Error::UnknownAtom(format!("{a:?}")));
    }
    let prv = &m.prvs[a.prv];
    if a.args.len() != prv.params.len()
        || a.args
            .iter()
            .zip(&prv.params)
            .any(|(&c, &lv)| c >= m.logvars[lv].domain.len())
    {
        return Err(Error::UnknownAtom(format!("{a:?}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Lifted view of a split model
// ---------------------------------------------------------------------------

/// Per-parfactor argument nodes of the split lifted graph, plus adjacency.
struct LiftedView {
    /// `arg_nodes[pf][i]` is the node the i-th argument resolves to.
    arg_nodes: Vec<Vec<LiftedNode>>,
}

impl LiftedView {
    fn build(m: &Model) -> LiftedView {
        let arg_nodes = m
            .parfactors
            .iter()
            .map(|pf| {
                let tuples = m.constraint_tuples(&pf.constraint);
                pf.args
                    .iter()
                    .map(|&arg| {
                        let positions: Vec<usize> = m.prvs[arg]
                            .params
                            .iter()
                            .map(|lv| {
                                pf.constraint
                                    .logvars
                                    .iter()
                                    .position(|x| x == lv)
                                    .expect("validated model")
                            })
                            .collect();
                        let instances: Vec<Vec<usize>> = tuples
                            .iter()
                            .map(|t| positions.iter().map(|&p| t[p]).collect())
                            .collect();
                        LiftedNode::for_instances(m, arg, instances)
                    })
                    .collect()
            })
            .collect();
        LiftedView { arg_nodes }
    }

    /// Nodes sharing a factor (of any direction) with `node`.
    fn adjacent(&self, node: &LiftedNode) -> BTreeSet<LiftedNode> {
        let mut out = BTreeSet::new();
        for nodes in &self.arg_nodes {
            if nodes.contains(node) {
                out.extend(nodes.iter().filter(|n| *n != node).cloned());
            }
        }
        out
    }

    /// Undirected neighbours: co-arguments across factors with no child
    /// mark at all.
    fn neighbours(&self, m: &Model, node: &LiftedNode) -> BTreeSet<LiftedNode> {
        let mut out = BTreeSet::new();
        for (pf, nodes) in m.parfactors.iter().zip(&self.arg_nodes) {
            if pf.is_fully_undirected() && nodes.contains(node) {
                out.extend(nodes.iter().filter(|n| *n != node).cloned());
            }
        }
        out
    }
}

fn target_nodes(m: &Model, targets: &[SplitTarget]) -> Vec<LiftedNode> {
    targets
        .iter()
        .map(|t| LiftedNode::for_instances(m, t.prv(), t.instances()))
        .collect()
}

/// Sufficient condition for a uniquely determined effect: after splitting,
/// no target retains an undirected neighbour. A negative answer only means
/// the effect is not guaranteed unique; enumeration may still collapse to a
/// single distribution.
pub fn uniquely_identifiable(m: &Model, dq: &DoQuery) -> Result<bool> {
    let resolved = resolve_do_query(m, dq)?;
    let m_split = split_on_atoms(m, &resolved.split_targets)?;
    let view = LiftedView::build(&m_split);
    Ok(target_nodes(&m_split, &resolved.split_targets)
        .iter()
        .all(|t| view.neighbours(&m_split, t).is_empty()))
}

/// All joint parent-set candidates: per target, every subset of its
/// undirected neighbours that forms a clique (each pair directly connected
/// via some factor). Deterministic order: subsets in bitmask order per
/// target, lexicographic across targets. Candidates that later admit no
/// consistent orientation are filtered by [`orient_and_extend`].
pub fn enumerate_parent_choices(
    m_split: &Model,
    targets: &[SplitTarget],
) -> Result<Vec<ParentChoice>> {
    for t in targets {
        if t.prv() >= m_split.prvs.len() {
            return Err(Error::UnknownPrv(format!("#{}", t.prv())));
        }
    }
    let view = LiftedView::build(m_split);
    let nodes = target_nodes(m_split, targets);

    let mut per_target_subsets: Vec<Vec<BTreeSet<LiftedNode>>> = Vec::new();
    for node in &nodes {
        let ne: Vec<LiftedNode> = view.neighbours(m_split, node).into_iter().collect();
        let mut subsets = Vec::with_capacity(1 << ne.len());
        'mask: for mask in 0u64..(1u64 << ne.len()) {
            let subset: Vec<&LiftedNode> = ne
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, n)| n)
                .collect();
            for i in 0..subset.len() {
                for j in i + 1..subset.len() {
                    if !view.adjacent(subset[i]).contains(subset[j]) {
                        continue 'mask;
                    }
                }
            }
            subsets.push(subset.into_iter().cloned().collect());
        }
        per_target_subsets.push(subsets);
    }

    let mut out = Vec::new();
    let mut idx = vec![0usize; targets.len()];
    loop {
        let per_target: Vec<(LiftedNode, BTreeSet<LiftedNode>)> = nodes
            .iter()
            .enumerate()
            .map(|(t, node)| (node.clone(), per_target_subsets[t][idx[t]].clone()))
            .collect();
        out.push(ParentChoice { per_target });
        // Odometer, last target fastest: lexicographic across targets.
        let mut t = targets.len();
        loop {
            if t == 0 {
                return Ok(out);
            }
            t -= 1;
            idx[t] += 1;
            if idx[t] < per_target_subsets[t].len() {
                break;
            }
            idx[t] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// Orientation
// ---------------------------------------------------------------------------

/// Ground structural context for orientation validity checks.
struct GroundStructure {
    n_atoms: usize,
    /// Per ground factor: atom list and source parfactor.
    factors: Vec<(Vec<AtomId>, usize)>,
    /// Atom pairs sharing any factor.
    adjacent: HashSet<(AtomId, AtomId)>,
    /// Collider triples `(min parent, max parent, child)` already present
    /// through originally directed factor pairs.
    baseline_colliders: HashSet<(AtomId, AtomId, AtomId)>,
}

impl GroundStructure {
    fn build(m: &Model, gm: &GroundModel) -> GroundStructure {
        let factors: Vec<(Vec<AtomId>, usize)> = gm
            .factors
            .iter()
            .map(|f| (f.atoms.clone(), f.source))
            .collect();
        let mut adjacent = HashSet::new();
        for (atoms, _) in &factors {
            for &a in atoms {
                for &b in atoms {
                    if a != b {
                        adjacent.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
        let orig_child: Vec<Option<usize>> =
            m.parfactors.iter().map(|pf| pf.child_arg()).collect();
        let mut gs = GroundStructure {
            n_atoms: gm.atoms.len(),
            factors,
            adjacent,
            baseline_colliders: HashSet::new(),
        };
        gs.baseline_colliders = gs.collider_triples(&orig_child);
        gs
    }

    /// All collider triples induced by factor pairs directed in `child_of`.
    fn collider_triples(&self, child_of: &[Option<usize>]) -> HashSet<(AtomId, AtomId, AtomId)> {
        let mut by_child: BTreeMap<AtomId, Vec<usize>> = BTreeMap::new();
        for (fi, (atoms, src)) in self.factors.iter().enumerate() {
            if let Some(c) = child_of[*src] {
                by_child.entry(atoms[c]).or_default().push(fi);
            }
        }
        let mut triples = HashSet::new();
        for (&child, fs) in &by_child {
            for (i, &f1) in fs.iter().enumerate() {
                for &f2 in &fs[i + 1..] {
                    let (a1, s1) = &self.factors[f1];
                    let (a2, s2) = &self.factors[f2];
                    let c1 = child_of[*s1].unwrap();
                    let c2 = child_of[*s2].unwrap();
                    for (p1i, &p1) in a1.iter().enumerate() {
                        if p1i == c1 {
                            continue;
                        }
                        for (p2i, &p2) in a2.iter().enumerate() {
                            if p2i == c2 || p1 == p2 {
                                continue;
                            }
                            triples.insert((p1.min(p2), p1.max(p2), child));
                        }
                    }
                }
            }
        }
        triples
    }

    /// Acyclicity of the variable-level directed projection under the
    /// partial orientation `child_of` (indexed by parfactor).
    fn acyclic(&self, child_of: &[Option<usize>]) -> bool {
        let mut adj: Vec<Vec<AtomId>> = vec![Vec::new(); self.n_atoms];
        for (atoms, src) in &self.factors {
            if let Some(c) = child_of[*src] {
                let child = atoms[c];
                for (i, &a) in atoms.iter().enumerate() {
                    if i != c {
                        adj[a].push(child);
                    }
                }
            }
        }
        let mut state = vec![0u8; self.n_atoms];
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
        !(0..self.n_atoms).any(|v| state[v] == 0 && dfs(v, &adj, &mut state))
    }

    /// True when the orientation introduces no collider between a pair of
    /// non-adjacent parents that was absent from the input model. Such a
    /// pattern would alter the encoded conditional independences.
    fn colliders_preserved(&self, child_of: &[Option<usize>]) -> bool {
        for triple in self.collider_triples(child_of) {
            if self.baseline_colliders.contains(&triple) {
                continue;
            }
            let (p1, p2, _) = triple;
            if !self.adjacent.contains(&(p1, p2)) {
                return false;
            }
        }
        true
    }

    fn valid(&self, child_of: &[Option<usize>]) -> bool {
        self.acyclic(child_of) && self.colliders_preserved(child_of)
    }
}

/// Orients the factors at each target according to the choice (selected
/// neighbours point at the target, unselected neighbours receive the edge),
/// then extends the remaining fully undirected factors to a fully directed
/// model that is acyclic and introduces no new collider between non-adjacent
/// parents. Returns `None` when no such completion exists, including when
/// the choice itself is inconsistent (it selects one argument of a wider
/// undirected factor but not another).
pub fn orient_and_extend(m_split: &Model, choice: &ParentChoice) -> Result<Option<Model>> {
    let view = LiftedView::build(m_split);
    let gm = ground(m_split)?;
    let gs = GroundStructure::build(m_split, &gm);

    let n_pf = m_split.parfactors.len();
    let mut pinned: Vec<Option<usize>> = m_split
        .parfactors
        .iter()
        .map(|pf| pf.child_arg())
        .collect();
    // Allowed child positions for factors constrained but not pinned.
    let mut allowed: Vec<Option<Vec<usize>>> = vec![None; n_pf];

    for (target, selected) in &choice.per_target {
        for (pf_id, pf) in m_split.parfactors.iter().enumerate() {
            if !pf.is_fully_undirected() {
                continue;
            }
            let nodes = &view.arg_nodes[pf_id];
            let Some(t_pos) = nodes.iter().position(|n| n == target) else {
                continue;
            };
            let others: Vec<(usize, &LiftedNode)> = nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != t_pos)
                .collect();
            let selected_here: Vec<usize> = others
                .iter()
                .filter(|(_, n)| selected.contains(n))
                .map(|(i, _)| *i)
                .collect();
            let pin = if selected_here.len() == others.len() {
                // All co-arguments chosen as parents: the factor points at
                // the target.
                Some(t_pos)
            } else if selected_here.is_empty() {
                if others.len() == 1 {
                    // The single unselected neighbour must not become a
                    // parent of the target, so it receives the edge.
                    Some(others[0].0)
                } else {
                    let positions: Vec<usize> = others.iter().map(|(i, _)| *i).collect();
                    match &mut allowed[pf_id] {
                        slot @ None => *slot = Some(positions),
                        Some(prev) => prev.retain(|p| positions.contains(p)),
                    }
                    None
                }
            } else {
                // Mixed selection inside one factor is unrealisable: making
                // the factor point at the target would adopt every
                // co-argument as a parent.
                return Ok(None);
            };
            if let Some(pin) = pin {
                match pinned[pf_id] {
                    Some(existing) if existing != pin => return Ok(None),
                    _ => pinned[pf_id] = Some(pin),
                }
            }
        }
    }

    for (pf_id, slot) in allowed.iter().enumerate() {
        if let (Some(list), Some(pin)) = (slot, pinned[pf_id]) {
            if !list.contains(&pin) {
                return Ok(None);
            }
        }
        if matches!(slot, Some(list) if list.is_empty()) {
            return Ok(None);
        }
    }

    if !gs.valid(&pinned) {
        return Ok(None);
    }

    // Backtracking over the factors still undirected, deterministically
    // first factor first, candidate child arguments in declaration order.
    let open: Vec<usize> = (0..n_pf).filter(|&i| pinned[i].is_none()).collect();
    fn search(
        gs: &GroundStructure,
        m: &Model,
        open: &[usize],
        depth: usize,
        child_of: &mut Vec<Option<usize>>,
        allowed: &[Option<Vec<usize>>],
    ) -> bool {
        let Some(&pf_id) = open.get(depth) else {
            return true;
        };
        let arity = m.parfactors[pf_id].args.len();
        for cand in 0..arity {
            if let Some(list) = &allowed[pf_id] {
                if !list.contains(&cand) {
                    continue;
                }
            }
            child_of[pf_id] = Some(cand);
            if gs.valid(child_of) && search(gs, m, open, depth + 1, child_of, allowed) {
                return true;
            }
            child_of[pf_id] = None;
        }
        false
    }

    let mut child_of = pinned;
    if !search(&gs, m_split, &open, 0, &mut child_of, &allowed) {
        return Ok(None);
    }

    let mut out = m_split.clone();
    for (pf, child) in out.parfactors.iter_mut().zip(&child_of) {
        let c = child.expect("search assigns every factor");
        for (i, dir) in pf.edge_dirs.iter_mut().enumerate() {
            *dir = if i == c {
                EdgeDir::Child
            } else {
                EdgeDir::Undirected
            };
        }
    }
    Ok(Some(out))
}

// ---------------------------------------------------------------------------
// Post-intervention evaluation
// ---------------------------------------------------------------------------

/// `P(query | do(targets))` on a fully directed model: the product of the
/// joint's conditionals over all non-target variables, with targets clamped
/// as root values. Evaluated by variable elimination over the conditional
/// tables; the literal nested sum serves as the reference in tests.
pub fn post_intervention_distribution(
    m_full: &Model,
    query: &[GroundAtom],
    targets: &[(GroundAtom, usize)],
) -> Result<Distribution> {
    let gm = ground(m_full)?;
    if !gm.is_fully_directed() {
        return Err(Error::Precondition(
            "post-intervention evaluation requires a fully directed model".into(),
        ));
    }
    let q_ids: Vec<AtomId> = query
        .iter()
        .map(|a| gm.atom_id(a))
        .collect::<Result<_>>()?;
    let mut target_ev = Evidence::default();
    for (a, v) in targets {
        target_ev.0.insert(gm.atom_id(a)?, *v);
    }
    let target_set: BTreeSet<AtomId> = target_ev.0.keys().copied().collect();
    for q in &q_ids {
        if target_set.contains(q) {
            return Err(Error::QueryTargetOverlap(gm.atoms[*q].name.clone()));
        }
    }

    let mut tables = Vec::new();
    for r in 0..gm.atoms.len() {
        if target_set.contains(&r) {
            continue;
        }
        let cpt = infer::cpt(&gm, r)?;
        let mut scope = cpt.parents.clone();
        scope.push(cpt.child);
        tables.push(crate::infer::Table::from_factor(
            &gm, &scope, &cpt.values, &target_ev,
        ));
    }
    let (t, _) = infer::eliminate_tables(&gm, tables, &q_ids, &target_set, None);
    infer::distribution_from_table(&gm, &q_ids, &t)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

fn thread_cap() -> usize {
    std::env::var("LIFTDO_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs `f` over `0..n` on up to `LIFTDO_THREADS` workers, returning results
/// in index order regardless of completion order.
fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = thread_cap().min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<(usize, T)>> = Mutex::new(Vec::with_capacity(n));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                out.lock().unwrap().push((i, r));
            });
        }
    });
    let mut v = out.into_inner().unwrap();
    v.sort_by_key(|(i, _)| *i);
    v.into_iter().map(|(_, r)| r).collect()
}

/// Interventions on multi-instance targets assume every grounding of the
/// target sees the same factor structure. Checked per parfactor: the tuples
/// of a factor touching the slice must mention each instance equally often.
fn slice_structure_symmetric(m_split: &Model, targets: &[SplitTarget]) -> bool {
    for t in targets {
        let instances = t.instances();
        if instances.len() < 2 {
            continue;
        }
        let inst_set: BTreeSet<&Vec<usize>> = instances.iter().collect();
        for pf in &m_split.parfactors {
            let Some(positions) = occurrence_positions(m_split, pf, t.prv()) else {
                continue;
            };
            let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
            for tuple in m_split.constraint_tuples(&pf.constraint) {
                let inst: Vec<usize> = positions.iter().map(|&p| tuple[p]).collect();
                if inst_set.contains(&inst) {
                    *counts.entry(inst).or_insert(0) += 1;
                }
            }
            if counts.is_empty() {
                continue;
            }
            if counts.len() != instances.len() {
                return false;
            }
            let first = *counts.values().next().unwrap();
            if counts.values().any(|&c| c != first) {
                return false;
            }
        }
    }
    true
}

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
                    .expect("validated model")
            })
            .collect(),
    )
}

/// Deduplicates candidate distributions, keeping the first representative
/// per equivalence class along with every originating choice.
pub(crate) fn collect_answer(
    candidates: Vec<(ParentChoice, Option<Distribution>)>,
) -> DoAnswer {
    let mut results: Vec<DoResult> = Vec::new();
    for (choice, dist) in candidates {
        let Some(dist) = dist else { continue };
        match results
            .iter_mut()
            .find(|r| r.distribution.linf(&dist) <= DISTRIBUTION_EQ_TOL)
        {
            Some(r) => r.choices.push(choice),
            None => results.push(DoResult {
                choices: vec![choice],
                distribution: dist,
            }),
        }
    }
    DoAnswer {
        unique: results.len() == 1,
        results,
    }
}

/// True when two answers contain the same distinct distributions up to
/// `tol` in L-infinity distance, under a one-to-one matching.
pub fn answers_match(a: &DoAnswer, b: &DoAnswer, tol: f64) -> bool {
    if a.results.len() != b.results.len() {
        return false;
    }
    let n = a.results.len();
    let mut used = vec![false; n];
    fn assign(
        i: usize,
        a: &[DoResult],
        b: &[DoResult],
        used: &mut [bool],
        tol: f64,
    ) -> bool {
        if i == a.len() {
            return true;
        }
        for j in 0..b.len() {
            if !used[j] && a[i].distribution.linf(&b[j].distribution) <= tol {
                used[j] = true;
                if assign(i + 1, a, b, used, tol) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    assign(0, &a.results, &b.results, &mut used, tol)
}

/// The full interventional pipeline: split the model on the targets,
/// enumerate clique-valid parent choices on the lifted split graph, orient
/// and extend each choice, evaluate the surviving ones, and collect the
/// distinct distributions. Choices are independent work items evaluated in
/// parallel (capped by `LIFTDO_THREADS`) with results in choice order.
pub fn lifted_do_query(m: &Model, dq: &DoQuery) -> Result<DoAnswer> {
    let report = m.validate();
    if !report.ok() {
        return Err(Error::InvalidModel(report.to_string()));
    }
    let resolved = resolve_do_query(m, dq)?;
    let mut split_targets = resolved.split_targets.clone();
    let mut m_split = split_on_atoms(m, &split_targets)?;
    if !slice_structure_symmetric(&m_split, &split_targets) {
        // Asymmetric structure across a slice's groundings: fall back to
        // one target per ground atom.
        split_targets = resolved
            .ground_targets
            .iter()
            .map(|(a, _)| SplitTarget::Atom(a.clone()))
            .collect();
        m_split = split_on_atoms(m, &split_targets)?;
    }
    let choices = enumerate_parent_choices(&m_split, &split_targets)?;

    let outcomes: Vec<Result<Option<Distribution>>> = run_indexed(choices.len(), |i| {
        match orient_and_extend(&m_split, &choices[i])? {
            None => Ok(None),
            Some(m_full) => {
                post_intervention_distribution(&m_full, &resolved.query, &resolved.ground_targets)
                    .map(Some)
            }
        }
    });

    let mut candidates = Vec::with_capacity(choices.len());
    for (choice, outcome) in choices.into_iter().zip(outcomes) {
        candidates.push((choice, outcome?));
    }
    Ok(collect_answer(candidates))
}
