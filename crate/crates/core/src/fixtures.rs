//! Shared model fixtures for tests and benchmarks.
//!
//! The employee model ties a company's revenue to each employee's competence
//! and salary: competence and revenue share a fully undirected factor, while
//! salary is the known effect of both revenue and competence.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::{parse_model, ModelSource};
use crate::model::{Constraint, EdgeDir, LogVar, Model, Parfactor, Prv, Tuples};

/// Canonical text of the employee model (three employees).
pub const EMPLOYEE_SOURCE: &str = include_str!("../../../fixtures/employees.ppcfg");

/// The employee model with all-ones potentials.
pub fn employee_model() -> Model {
    parse_model(&ModelSource::new(EMPLOYEE_SOURCE, "employees.ppcfg")).expect("fixture parses")
}

/// The employee model with seeded pseudo-random potentials.
pub fn employee_model_seeded(seed: u64) -> Model {
    let mut m = employee_model();
    apply_seed_potentials(&mut m, seed);
    m
}

/// The employee model with `n` employees (`e1..en` replacing the default
/// domain) and all-ones potentials.
pub fn employee_model_sized(n: usize) -> Model {
    let mut m = employee_model();
    resize_domains(&mut m, n);
    m
}

/// Replaces every logvar domain by its first `n` constants, appending
/// generated names (`<logvar>4`, `<logvar>5`, ...) when the domain is too
/// short. Explicit constraints survive only if their tuples stay in range.
pub fn resize_domains(m: &mut Model, n: usize) {
    for lv in &mut m.logvars {
        if lv.domain.len() > n {
            lv.domain.truncate(n);
        }
        let mut i = lv.domain.len() + 1;
        while lv.domain.len() < n {
            let candidate = format!("{}{}", lv.name.to_lowercase(), i);
            if !lv.domain.contains(&candidate) {
                lv.domain.push(candidate);
            }
            i += 1;
        }
    }
    for pf in &mut m.parfactors {
        if let Tuples::Explicit(tuples) = &mut pf.constraint.tuples {
            tuples.retain(|t| {
                t.iter()
                    .zip(&pf.constraint.logvars)
                    .all(|(&c, &lv)| c < m.logvars[lv].domain.len())
            });
        }
    }
}

/// Replaces the table of every parfactor whose potentials are all exactly
/// 1.0 (i.e. declared `uniform`) by deterministic pseudo-random draws in
/// [0.5, 1.5). Factors are filled in declaration order, entries in row-major
/// order, from a ChaCha8 stream seeded with `seed`.
pub fn apply_seed_potentials(m: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pf in &mut m.parfactors {
        if pf.table.iter().all(|&v| v == 1.0) {
            let values: Vec<f64> = (0..pf.table.len())
                .map(|_| 0.5 + rng.gen::<f64>())
                .collect();
            pf.table = Arc::new(values);
        }
    }
}

/// Shape of the random models produced by [`random_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomStyle {
    /// Directed and undirected factors mixed; undirected factors are kept
    /// binary so that every ground ambiguity is visible at the factor level.
    Mixed,
    /// Every variable has exactly one incoming factor over all its parents,
    /// with the table normalised along the child dimension.
    DirectedCpt,
    /// Fully undirected factors only.
    Undirected,
}

/// Generates a small random model that validates. Deterministic in `seed`.
/// Ground size stays at or below `max_atoms`; fully undirected factors stay
/// at or below `max_ambiguous`.
pub fn random_model(seed: u64, style: RandomStyle, max_atoms: usize, max_ambiguous: usize) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    for attempt in 0..64 {
        let m = try_random_model(&mut rng, style, max_atoms, max_ambiguous);
        if let Some(m) = m {
            if m.validate().ok() {
                return m;
            }
        }
        let _ = attempt;
    }
    // The generator above converges quickly; fall back to a fixed model so
    // callers never loop forever.
    employee_model_seeded(seed)
}

fn try_random_model(
    rng: &mut ChaCha8Rng,
    style: RandomStyle,
    max_atoms: usize,
    max_ambiguous: usize,
) -> Option<Model> {
    let mut m = Model::default();
    let with_logvar = style == RandomStyle::Mixed && rng.gen_bool(0.5);
    if with_logvar {
        let size = rng.gen_range(2..=3usize);
        let domain = (0..size).map(|i| format!("c{}", i + 1)).collect();
        m.logvars.push(LogVar {
            name: "E".into(),
            domain,
        });
    }

    let n_prvs = rng.gen_range(3..=6usize);
    let mut atom_budget = 0usize;
    for i in 0..n_prvs {
        let parameterised = with_logvar && i < 2 && rng.gen_bool(0.7);
        let params = if parameterised { vec![0] } else { vec![] };
        let range_len = if rng.gen_bool(0.8) { 2 } else { 3 };
        let range = (0..range_len).map(|v| format!("v{}", v + 1)).collect();
        atom_budget += if parameterised {
            m.logvars[0].domain.len()
        } else {
            1
        };
        m.prvs.push(Prv {
            name: format!("X{}", i + 1),
            params,
            range,
        });
        if atom_budget >= max_atoms {
            break;
        }
    }
    let n = m.prvs.len();
    if n < 2 {
        return None;
    }

    // A fixed topological order keeps the directed projection acyclic.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let rank: Vec<usize> = {
        let mut r = vec![0; n];
        for (pos, &p) in order.iter().enumerate() {
            r[p] = pos;
        }
        r
    };

    let mut pfs: Vec<Parfactor> = Vec::new();
    let mut ambiguous = 0usize;
    let mut covered = vec![false; n];

    match style {
        RandomStyle::DirectedCpt => {
            for &child in &order {
                let upstream: Vec<usize> = (0..n).filter(|&p| rank[p] < rank[child]).collect();
                let k = rng.gen_range(0..=upstream.len().min(2));
                let mut parents = upstream;
                for i in (1..parents.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    parents.swap(i, j);
                }
                parents.truncate(k);
                parents.sort_unstable();
                let mut args = parents.clone();
                args.push(child);
                let mut edge_dirs = vec![EdgeDir::Undirected; args.len()];
                *edge_dirs.last_mut().unwrap() = EdgeDir::Child;
                let table = cpt_table(rng, &m, &args);
                pfs.push(new_pf(&m, format!("g{}", pfs.len() + 1), args, edge_dirs, table));
                covered[child] = true;
                for p in parents {
                    covered[p] = true;
                }
            }
        }
        RandomStyle::Undirected | RandomStyle::Mixed => {
            let n_factors = rng.gen_range(n.saturating_sub(1).max(2)..=n + 2);
            for _ in 0..n_factors {
                let a = rng.gen_range(0..n);
                let mut b = rng.gen_range(0..n);
                if a == b {
                    b = (b + 1) % n;
                }
                let directed = match style {
                    RandomStyle::Undirected => false,
                    _ => ambiguous >= max_ambiguous || rng.gen_bool(0.5),
                };
                let (args, edge_dirs) = if directed {
                    let (parent, child) = if rank[a] < rank[b] { (a, b) } else { (b, a) };
                    let mut args = vec![parent, child];
                    let mut dirs = vec![EdgeDir::Undirected, EdgeDir::Child];
                    // Occasionally widen a directed factor to three arguments.
                    if rng.gen_bool(0.25) {
                        if let Some(extra) = (0..n)
                            .filter(|&p| p != parent && p != child && rank[p] < rank[child])
                            .min_by_key(|&p| rank[p])
                        {
                            args.insert(0, extra);
                            dirs.insert(0, EdgeDir::Undirected);
                        }
                    }
                    (args, dirs)
                } else {
                    ambiguous += 1;
                    (vec![a, b], vec![EdgeDir::Undirected; 2])
                };
                if args.iter().collect::<std::collections::HashSet<_>>().len() != args.len() {
                    continue;
                }
                let table = random_table(rng, &m, &args);
                pfs.push(new_pf(&m, format!("g{}", pfs.len() + 1), args, edge_dirs, table));
                for &x in &pfs.last().unwrap().args {
                    covered[x] = true;
                }
            }
        }
    }

    // Tie uncovered variables in with a directed unary prior.
    for v in 0..n {
        if !covered[v] {
            let table = random_table(rng, &m, &[v]);
            pfs.push(new_pf(
                &m,
                format!("g{}", pfs.len() + 1),
                vec![v],
                vec![EdgeDir::Child],
                table,
            ));
        }
    }

    m.parfactors = pfs;
    let ground_atoms: usize = m
        .prvs
        .iter()
        .map(|p| {
            p.params
                .iter()
                .map(|&lv| m.logvars[lv].domain.len())
                .product::<usize>()
        })
        .sum();
    if ground_atoms > max_atoms {
        return None;
    }
    Some(m)
}

fn new_pf(
    m: &Model,
    name: String,
    args: Vec<usize>,
    edge_dirs: Vec<EdgeDir>,
    table: Vec<f64>,
) -> Parfactor {
    let logvars = {
        let mut seen = Vec::new();
        for &arg in &args {
            for &lv in &m.prvs[arg].params {
                if !seen.contains(&lv) {
                    seen.push(lv);
                }
            }
        }
        seen
    };
    Parfactor {
        name,
        args,
        edge_dirs,
        table: Arc::new(table),
        constraint: Constraint {
            logvars,
            tuples: Tuples::Top,
        },
    }
}

fn random_table(rng: &mut ChaCha8Rng, m: &Model, args: &[usize]) -> Vec<f64> {
    let len: usize = args.iter().map(|&a| m.prvs[a].range.len()).product();
    (0..len).map(|_| 0.5 + rng.gen::<f64>()).collect()
}

/// A table normalised along the final (child) dimension.
fn cpt_table(rng: &mut ChaCha8Rng, m: &Model, args: &[usize]) -> Vec<f64> {
    let mut table = random_table(rng, m, args);
    let child_card = m.prvs[*args.last().unwrap()].range.len();
    for row in table.chunks_mut(child_card) {
        let sum: f64 = row.iter().sum();
        for v in row {
            *v /= sum;
        }
    }
    table
}
