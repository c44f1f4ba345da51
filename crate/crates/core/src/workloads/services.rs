//! Byte-level service operations registered at proxies.
//!
//! Every operation takes its ordered input payloads and returns one output
//! payload. Operations that take parameters read them as JSON from the
//! first input; the remaining inputs are matrices in wire form.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::compose::{compose_pattern_with, ExprTree};
use super::matrix::{collate, gen_expression_at, ExpressionMatrix};
use super::par::Exec;
use super::rules::{mine_rules_with, MiningParams};
use super::WorkloadError;

pub type ServiceFn = Arc<dyn Fn(&[&[u8]]) -> Result<Vec<u8>, WorkloadError> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub seed: u64,
    pub n_genes: usize,
    pub n_regions: usize,
    pub density: f64,
    #[serde(default)]
    pub region_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    Regions(Vec<String>),
    /// A pattern defined by combining gene patterns.
    Tree(ExprTree),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeParams {
    pub target: TargetSpec,
    pub max_leaves: usize,
}

fn params<T: for<'de> Deserialize<'de>>(inputs: &[&[u8]], op: &str) -> Result<T, WorkloadError> {
    let raw = inputs.first().ok_or_else(|| WorkloadError::BadParams(format!("{op} needs a parameter input")))?;
    serde_json::from_slice(raw).map_err(|e| WorkloadError::BadParams(format!("{op} parameters: {e}")))
}

fn matrices(inputs: &[&[u8]]) -> Result<Vec<ExpressionMatrix>, WorkloadError> {
    inputs.iter().map(|b| ExpressionMatrix::from_json_bytes(b)).collect()
}

fn collated(inputs: &[&[u8]]) -> Result<ExpressionMatrix, WorkloadError> {
    let parts = matrices(inputs)?;
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().expect("one part"));
    }
    collate(&parts)
}

pub fn echo(inputs: &[&[u8]]) -> Result<Vec<u8>, WorkloadError> {
    Ok(inputs.concat())
}

pub fn gen_expression_op(inputs: &[&[u8]]) -> Result<Vec<u8>, WorkloadError> {
    let p: GenParams = params(inputs, "gen_expression")?;
    let m = gen_expression_at(p.seed, p.n_genes, p.n_regions, p.density, p.region_offset, Exec::default())?;
    Ok(m.to_json_bytes())
}

pub fn collate_op(inputs: &[&[u8]]) -> Result<Vec<u8>, WorkloadError> {
    Ok(collate(&matrices(inputs)?)?.to_json_bytes())
}

pub fn complement_op(inputs: &[&[u8]]) -> Result<Vec<u8>, WorkloadError> {
    Ok(collated(inputs)?.complement().to_json_bytes())
}

/// Collates every matrix input, then mines it.
pub fn mine_rules_op(inputs: &[&[u8]]) -> Result<Vec<u8>, WorkloadError> {
    let p: MiningParams = params(inputs, "mine_rules")?;
    let m = collated(&inputs[1..])?;
    let rules = mine_rules_with(&m, &p, Exec::default())?;
    Ok(serde_json::to_vec(&rules).expect("rules serialize"))
}

/// Collates every matrix input, then composes the target from it.
pub fn compose_pattern_op(inputs: &[&[u8]]) -> Result<Vec<u8>, WorkloadError> {
    let p: ComposeParams = params(inputs, "compose_pattern")?;
    let m = collated(&inputs[1..])?;
    let target = match &p.target {
        TargetSpec::Regions(names) => m.region_set(names.iter().map(String::as_str))?,
        TargetSpec::Tree(tree) => tree.evaluate(&m, &m.gene_sets(Exec::default()))?,
    };
    let (result, _) = compose_pattern_with(&m, &target, p.max_leaves, Exec::default())?;
    Ok(serde_json::to_vec(&result).expect("composition serializes"))
}

/// Named operations a proxy can run for its colocated services.
#[derive(Clone, Default)]
pub struct ServiceRegistry {
    ops: BTreeMap<String, ServiceFn>,
}

impl ServiceRegistry {
    pub const STANDARD: [&'static str; 6] =
        ["echo", "gen_expression", "collate", "complement", "mine_rules", "compose_pattern"];

    pub fn standard() -> Self {
        let mut r = ServiceRegistry::default();
        r.register("echo", echo);
        r.register("gen_expression", gen_expression_op);
        r.register("collate", collate_op);
        r.register("complement", complement_op);
        r.register("mine_rules", mine_rules_op);
        r.register("compose_pattern", compose_pattern_op);
        r
    }

    /// `"all"` or a comma-separated list of standard operation names.
    pub fn from_spec(spec: &str) -> Result<Self, WorkloadError> {
        let all = Self::standard();
        if spec.trim() == "all" {
            return Ok(all);
        }
        let mut r = ServiceRegistry::default();
        for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let f = all.ops.get(name).ok_or_else(|| WorkloadError::BadParams(format!("unknown workload {name:?}")))?;
            r.ops.insert(name.to_string(), f.clone());
        }
        Ok(r)
    }

    pub fn register<F>(&mut self, name: &str, f: F)
    where
        F: Fn(&[&[u8]]) -> Result<Vec<u8>, WorkloadError> + Send + Sync + 'static,
    {
        self.ops.insert(name.to_string(), Arc::new(f));
    }

    pub fn get(&self, name: &str) -> Option<&ServiceFn> {
        self.ops.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ops.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for ServiceRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.ops.keys()).finish()
    }
}
