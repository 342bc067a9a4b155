//! Shared test oracles, kept independent of the engine's implementation
//! paths: separation by literal path enumeration, and exhaustive joint
//! tables for numerical independence checks.

use std::collections::BTreeSet;

use liftdo_core::ground::{AtomId, GroundModel};
use liftdo_core::model::cartesian;

/// Self-or-descendant-observed flags, recomputed here from scratch.
fn active_under(gm: &GroundModel, z: &BTreeSet<AtomId>) -> Vec<bool> {
    let n = gm.atoms.len();
    let mut children: Vec<Vec<AtomId>> = vec![Vec::new(); n];
    for f in &gm.factors {
        if let Some(c) = f.child_atom() {
            for &a in &f.atoms {
                if a != c {
                    children[a].push(c);
                }
            }
        }
    }
    fn observed_below(
        v: usize,
        children: &[Vec<usize>],
        z: &BTreeSet<usize>,
        memo: &mut Vec<Option<bool>>,
    ) -> bool {
        if let Some(r) = memo[v] {
            return r;
        }
        memo[v] = Some(false); // break cycles defensively; models are acyclic
        let r = z.contains(&v)
            || children[v]
                .iter()
                .any(|&c| observed_below(c, children, z, memo));
        memo[v] = Some(r);
        r
    }
    let mut memo = vec![None; n];
    (0..n)
        .map(|v| observed_below(v, &children, z, &mut memo))
        .collect()
}

/// Literal reading of the three blocking rules along one simple path.
/// `true` means some unblocked simple path connects a node of `x` with a
/// node of `y`.
fn connected_by_some_path(
    gm: &GroundModel,
    x: &BTreeSet<AtomId>,
    y: &BTreeSet<AtomId>,
    z: &BTreeSet<AtomId>,
) -> bool {
    let active = active_under(gm, z);
    let n = gm.atoms.len();
    let mut var_factors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, f) in gm.factors.iter().enumerate() {
        for &a in &f.atoms {
            var_factors[a].push(i);
        }
    }

    struct Dfs<'a> {
        gm: &'a GroundModel,
        var_factors: &'a [Vec<usize>],
        active: &'a [bool],
        y: &'a BTreeSet<AtomId>,
        z: &'a BTreeSet<AtomId>,
        seen_vars: Vec<bool>,
        seen_factors: Vec<bool>,
    }

    impl Dfs<'_> {
        /// Extends the path that currently ends at `v`, reached through
        /// `entered_directed` (edge pointing into `v`). `None` marks the
        /// path start.
        fn extend(&mut self, v: AtomId, entered_directed: Option<bool>) -> bool {
            for &f in &self.var_factors[v] {
                if self.seen_factors[f] {
                    continue;
                }
                let factor = &self.gm.factors[f];
                let child = factor.child_atom();
                let leave_directed = child == Some(v);
                // Rules 1 and 2 at the interior variable v.
                if let Some(came_directed) = entered_directed {
                    let ok = if came_directed && leave_directed {
                        self.active[v]
                    } else {
                        !self.z.contains(&v)
                    };
                    if !ok {
                        continue;
                    }
                }
                for &w in &factor.atoms {
                    if w == v || self.seen_vars[w] {
                        continue;
                    }
                    // Rule 3 for the hop through the factor.
                    let enter_directed = child == Some(w);
                    if !leave_directed && !enter_directed {
                        if let Some(b) = child {
                            if !self.active[b] {
                                continue;
                            }
                        }
                    }
                    if self.y.contains(&w) {
                        return true;
                    }
                    self.seen_factors[f] = true;
                    self.seen_vars[w] = true;
                    if self.extend(w, Some(enter_directed)) {
                        return true;
                    }
                    self.seen_vars[w] = false;
                    self.seen_factors[f] = false;
                }
            }
            false
        }
    }

    for &s in x {
        let mut dfs = Dfs {
            gm,
            var_factors: &var_factors,
            active: &active,
            y,
            z,
            seen_vars: vec![false; n],
            seen_factors: vec![false; gm.factors.len()],
        };
        dfs.seen_vars[s] = true;
        if dfs.extend(s, None) {
            return true;
        }
    }
    false
}

/// Separation by exhaustive path enumeration.
pub fn d_separated_paths(
    gm: &GroundModel,
    x: &BTreeSet<AtomId>,
    y: &BTreeSet<AtomId>,
    z: &BTreeSet<AtomId>,
) -> bool {
    !connected_by_some_path(gm, x, y, z)
}

/// Full joint table over all atoms, by exhaustive enumeration.
pub struct ExhaustiveJoint {
    pub cards: Vec<usize>,
    pub probs: Vec<f64>,
}

impl ExhaustiveJoint {
    pub fn build(gm: &GroundModel) -> ExhaustiveJoint {
        let cards = gm.cards();
        let mut probs = Vec::with_capacity(cards.iter().product());
        for a in gm.assignments() {
            probs.push(gm.unnormalized_weight(&a));
        }
        let z: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= z;
        }
        ExhaustiveJoint { cards, probs }
    }

    /// Marginal probability of a partial assignment.
    pub fn prob_of(&self, partial: &[(AtomId, usize)]) -> f64 {
        let mut total = 0.0;
        for (idx, tuple) in cartesian(&self.cards).iter().enumerate() {
            if partial.iter().all(|&(a, v)| tuple[a] == v) {
                total += self.probs[idx];
            }
        }
        total
    }
}

/// All conditioning sets of size at most `max` over `pool`.
pub fn subsets_up_to(pool: &[AtomId], max: usize) -> Vec<Vec<AtomId>> {
    let mut out = vec![vec![]];
    if max >= 1 {
        for (i, &a) in pool.iter().enumerate() {
            out.push(vec![a]);
            if max >= 2 {
                for &b in &pool[i + 1..] {
                    out.push(vec![a, b]);
                }
            }
        }
    }
    out
}
