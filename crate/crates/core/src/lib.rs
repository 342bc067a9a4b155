//! Exact probabilistic and causal inference for partially directed
//! parametric factor graphs.
//!
//! Models pair a relational factor-graph representation (parameterised
//! random variables under logical-variable constraints) with partial causal
//! knowledge: each factor-variable edge is either undirected or directed
//! towards a known effect. The engine answers observational queries by
//! exact variable elimination over the grounding, checks conditional
//! independence by separation on the ground or lifted graph, and answers
//! interventional queries by enumerating every realisable parent set of the
//! targets, as the undirected edges leave the true parents open. A
//! brute-force ground oracle backs all of it for verification.

pub mod causal;
pub mod dsep;
pub mod error;
pub mod fixtures;
pub mod ground;
pub mod infer;
pub mod io;
pub mod model;
pub mod oracle;
pub mod shatter;

pub use causal::{
    lifted_do_query, DoAnswer, DoQuery, DoResult, LiftedNode, ParentChoice, TargetRef,
};
pub use dsep::{d_separated, d_separated_lifted, SepQuery};
pub use error::{Error, Result};
pub use ground::{ground, Assignment, AtomId, GroundModel};
pub use infer::{conditional_given_parents, marginal, marginal_joint, Distribution, Evidence};
pub use io::{parse_model, parse_query, serialize_model, ModelSource, ParseError, ParsedQuery};
pub use model::{GroundAtom, LogVar, Model, Parfactor, Prv, ValidationReport};
pub use shatter::{split_on_atoms, SplitTarget};
