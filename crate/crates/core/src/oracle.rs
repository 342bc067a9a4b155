//! Brute-force ground reference: enumerates every admissible fully directed
//! extension of a ground model and evaluates post-intervention distributions
//! by literal summation over exhaustively derived conditionals. Slow by
//! design; the lifted pipeline is tested against it.

use std::collections::BTreeSet;

use crate::causal::{collect_answer, DoAnswer, LiftedNode, ParentChoice};
use crate::dsep::SepGraph;
use crate::error::{Error, Result};
use crate::ground::{ground_directed_cycle, Assignment, AtomId, GroundModel};
use crate::infer::Distribution;
use crate::model::cartesian;

/// Hard cap on fully undirected factors for extension enumeration.
pub const MAX_AMBIGUOUS_FACTORS: usize = 12;
/// Hard cap on the assignment space for literal summation.
pub const MAX_STATE_SPACE: f64 = 1e7;

/// Separation queries used for the independence-equivalence test: all
/// single-atom pairs with conditioning sets of size at most two. Wide
/// enough to catch fresh colliders and destroyed separations on desk-size
/// fixtures.
fn equivalence_queries(n: usize) -> Vec<(usize, usize, Vec<usize>)> {
    let mut qs = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            let rest: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
            qs.push((x, y, Vec::new()));
            for (i, &a) in rest.iter().enumerate() {
                qs.push((x, y, vec![a]));
                for &b in &rest[i + 1..] {
                    qs.push((x, y, vec![a, b]));
                }
            }
        }
    }
    qs
}

/// Every assignment of a child to each fully undirected factor such that
/// the result is acyclic and keeps all separation statements of the input.
/// Deterministic order (per-factor argument odometer).
pub fn enumerate_extensions(gm: &GroundModel) -> Result<Vec<GroundModel>> {
    let ambiguous: Vec<usize> = gm
        .factors
        .iter()
        .enumerate()
        .filter(|(_, f)| f.child.is_none())
        .map(|(i, _)| i)
        .collect();
    if ambiguous.len() > MAX_AMBIGUOUS_FACTORS {
        return Err(Error::TooManyAmbiguousFactors {
            count: ambiguous.len(),
            guard: MAX_AMBIGUOUS_FACTORS,
        });
    }
    let queries = equivalence_queries(gm.atoms.len());
    let base_graph = SepGraph::from_ground(gm);
    let base: Vec<bool> = queries
        .iter()
        .map(|(x, y, z)| base_graph.separated_slices(&[*x], &[*y], z))
        .collect();

    let dims: Vec<usize> = ambiguous
        .iter()
        .map(|&i| gm.factors[i].atoms.len())
        .collect();
    let mut out = Vec::new();
    for combo in cartesian(&dims) {
        let mut candidate = gm.clone();
        for (&f, &c) in ambiguous.iter().zip(&combo) {
            candidate.factors[f].child = Some(c);
        }
        if ground_directed_cycle(&candidate) {
            continue;
        }
        let graph = SepGraph::from_ground(&candidate);
        let equivalent = queries
            .iter()
            .zip(&base)
            .all(|((x, y, z), &b)| graph.separated_slices(&[*x], &[*y], z) == b);
        if equivalent {
            out.push(candidate);
        }
    }
    Ok(out)
}

/// Conditionals of every non-target atom, derived by one exhaustive pass
/// over all assignments. `tables[r]` is row-major over `[parents of r, r]`.
struct ExhaustiveConditionals {
    parents: Vec<Vec<AtomId>>,
    tables: Vec<Vec<f64>>,
}

impl ExhaustiveConditionals {
    fn build(gm: &GroundModel) -> ExhaustiveConditionals {
        let n = gm.atoms.len();
        let cards = gm.cards();
        let parents: Vec<Vec<AtomId>> = (0..n).map(|r| gm.parents_of(r)).collect();
        let mut sums: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                let len: usize = parents[r]
                    .iter()
                    .map(|&p| cards[p])
                    .product::<usize>()
                    * cards[r];
                vec![0.0; len]
            })
            .collect();
        for a in gm.assignments() {
            let w = gm.unnormalized_weight(&a);
            for r in 0..n {
                let mut idx = 0;
                for &p in &parents[r] {
                    idx = idx * cards[p] + a.0[p];
                }
                idx = idx * cards[r] + a.0[r];
                sums[r][idx] += w;
            }
        }
        for r in 0..n {
            for row in sums[r].chunks_mut(cards[r]) {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    for v in row {
                        *v /= s;
                    }
                }
            }
        }
        ExhaustiveConditionals {
            parents,
            tables: sums,
        }
    }

    fn prob(&self, gm: &GroundModel, r: AtomId, a: &Assignment) -> f64 {
        let cards = gm.cards();
        let mut idx = 0;
        for &p in &self.parents[r] {
            idx = idx * cards[p] + a.0[p];
        }
        idx = idx * cards[r] + a.0[r];
        self.tables[r][idx]
    }
}

/// Literal post-intervention sum on a fully directed ground model: for each
/// query value, the sum over all non-query non-target assignments of the
/// product of conditionals of non-target variables, with targets clamped.
pub fn eq1_literal(
    gm: &GroundModel,
    query: &[AtomId],
    targets: &[(AtomId, usize)],
) -> Result<Distribution> {
    if gm.state_space() > MAX_STATE_SPACE {
        return Err(Error::StateSpaceTooLarge {
            size: gm.state_space(),
            guard: MAX_STATE_SPACE,
        });
    }
    let cards = gm.cards();
    let conds = ExhaustiveConditionals::build(gm);
    let target_ids: BTreeSet<AtomId> = targets.iter().map(|(a, _)| *a).collect();
    let free: Vec<AtomId> = (0..gm.atoms.len())
        .filter(|a| !target_ids.contains(a))
        .collect();
    let free_dims: Vec<usize> = free.iter().map(|&a| cards[a]).collect();

    let q_cards: Vec<usize> = query.iter().map(|&q| cards[q]).collect();
    let mut probs = vec![0.0; q_cards.iter().product()];
    let mut full = Assignment(vec![0; gm.atoms.len()]);
    for (a, v) in targets {
        full.0[*a] = *v;
    }
    for tuple in cartesian(&free_dims) {
        for (&a, &v) in free.iter().zip(&tuple) {
            full.0[a] = v;
        }
        let prod: f64 = free.iter().map(|&r| conds.prob(gm, r, &full)).product();
        let mut qidx = 0;
        for (&q, &c) in query.iter().zip(&q_cards) {
            qidx = qidx * c + full.0[q];
        }
        probs[qidx] += prod;
    }
    let s: f64 = probs.iter().sum();
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::ZeroEvidenceProbability);
    }
    for p in &mut probs {
        *p /= s;
    }
    Ok(Distribution {
        atoms: query.to_vec(),
        atoms_prvs: query.iter().map(|&q| gm.atoms[q].atom.prv).collect(),
        cards: q_cards,
        probs,
    })
}

fn atom_node(gm: &GroundModel, id: AtomId) -> LiftedNode {
    let atom = &gm.atoms[id].atom;
    if atom.args.is_empty() {
        LiftedNode::Whole(atom.prv)
    } else {
        LiftedNode::Slice(atom.prv, vec![atom.args.clone()])
    }
}

/// Undirected neighbours of an atom: co-arguments across fully undirected
/// factors.
fn ground_neighbours(gm: &GroundModel, id: AtomId) -> BTreeSet<AtomId> {
    let mut out = BTreeSet::new();
    for f in &gm.factors {
        if f.child.is_none() && f.atoms.contains(&id) {
            out.extend(f.atoms.iter().copied().filter(|&a| a != id));
        }
    }
    out
}

/// The parent choice an extension realises: per target, its parents that
/// were undirected neighbours in the input model.
fn realized_choice(
    input: &GroundModel,
    ext: &GroundModel,
    targets: &[(AtomId, usize)],
) -> ParentChoice {
    let per_target = targets
        .iter()
        .map(|(t, _)| {
            let ne = ground_neighbours(input, *t);
            let selected: BTreeSet<LiftedNode> = ext
                .parents_of(*t)
                .into_iter()
                .filter(|p| ne.contains(p))
                .map(|p| atom_node(input, p))
                .collect();
            (atom_node(input, *t), selected)
        })
        .collect();
    ParentChoice { per_target }
}

/// Exhaustive interventional inference: evaluates the literal sum on every
/// admissible extension and returns the deduplicated distribution set with
/// the realised parent choices as provenance.
pub fn brute_force_do(
    gm: &GroundModel,
    query: &[AtomId],
    targets: &[(AtomId, usize)],
) -> Result<DoAnswer> {
    if gm.state_space() > MAX_STATE_SPACE {
        return Err(Error::StateSpaceTooLarge {
            size: gm.state_space(),
            guard: MAX_STATE_SPACE,
        });
    }
    for &q in query {
        if q >= gm.atoms.len() {
            return Err(Error::UnknownAtom(format!("#{q}")));
        }
        if targets.iter().any(|(t, _)| *t == q) {
            return Err(Error::QueryTargetOverlap(gm.atoms[q].name.clone()));
        }
    }
    let extensions = enumerate_extensions(gm)?;
    let mut candidates = Vec::with_capacity(extensions.len());
    for ext in &extensions {
        let dist = eq1_literal(ext, query, targets)?;
        candidates.push((realized_choice(gm, ext, targets), Some(dist)));
    }
    Ok(collect_answer(candidates))
}

/// Convenience wrapper resolving a model-level do-query before running the
/// ground brute force.
pub fn brute_force_do_query(
    m: &crate::model::Model,
    dq: &crate::causal::DoQuery,
) -> Result<DoAnswer> {
    let resolved = crate::causal::resolve_do_query(m, dq)?;
    let gm = crate::ground::ground(m)?;
    let query: Vec<AtomId> = resolved
        .query
        .iter()
        .map(|a| gm.atom_id(a))
        .collect::<Result<_>>()?;
    let targets: Vec<(AtomId, usize)> = resolved
        .ground_targets
        .iter()
        .map(|(a, v)| gm.atom_id(a).map(|id| (id, *v)))
        .collect::<Result<_>>()?;
    brute_force_do(&gm, &query, &targets)
}
