//! Deterministic services run behind proxies: synthetic expression sources,
//! collation, association-rule mining and target-pattern composition.

mod bits;
mod compose;
mod matrix;
mod par;
mod rules;
mod services;

pub use bits::RegionSet;
pub use compose::{compose_pattern, compose_pattern_with, CompositionResult, ExprTree, SetOp};
pub use matrix::{collate, encoded_len, gen_expression, gen_expression_at, gene_name, region_name, ExpressionMatrix};
pub use par::Exec;
pub use rules::{meets_confidence, meets_support, mine_rules, mine_rules_with, AssociationRule, MiningParams};
pub use services::{ComposeParams, GenParams, ServiceFn, ServiceRegistry, TargetSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkloadError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("parts do not share one gene list")]
    GeneMismatch,
    #[error("region {0} appears in more than one part")]
    DuplicateRegion(String),
    #[error("malformed matrix: {0}")]
    Malformed(String),
}
