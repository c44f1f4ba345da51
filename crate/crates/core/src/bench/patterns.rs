use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::transport::Topology;
use crate::workflow::{InputBinding, TaskNode, WorkflowDefinition};
use crate::workloads::{encoded_len, ComposeParams, ExprTree, GenParams, MiningParams, SetOp, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Pipeline,
    FanIn,
    FanOut,
    Fig3Scenario,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [Pattern::Pipeline, Pattern::FanIn, Pattern::FanOut, Pattern::Fig3Scenario];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::Pipeline => "pipeline",
            Pattern::FanIn => "fan_in",
            Pattern::FanOut => "fan_out",
            Pattern::Fig3Scenario => "fig3_scenario",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| BenchError::InvalidSpec(format!("unknown pattern {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub pattern: Pattern,
    pub n: usize,
    pub payload_mb: f64,
    pub topology_file: PathBuf,
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

fn default_repetitions() -> usize {
    3
}

impl BenchmarkSpec {
    pub fn new(pattern: Pattern, n: usize, payload_mb: f64, seed: u64) -> Self {
        BenchmarkSpec {
            pattern,
            n,
            payload_mb,
            topology_file: PathBuf::new(),
            seed,
            repetitions: default_repetitions(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n < 1 {
            return Err(BenchError::InvalidSpec("n must be at least 1".into()));
        }
        if !(self.payload_mb > 0.0 && self.payload_mb.is_finite()) {
            return Err(BenchError::InvalidSpec(format!("payload_mb {} must be positive", self.payload_mb)));
        }
        if self.repetitions < 1 {
            return Err(BenchError::InvalidSpec("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Genes per synthetic source. Four bytes of packed cells per region.
pub const BENCH_GENES: usize = 32;
pub const BENCH_DENSITY: f64 = 0.5;

/// Miner settings for benchmark sinks: pairs only, so the rule list stays
/// well under a megabyte.
pub const BENCH_MINING: MiningParams = MiningParams { min_support: 0.2, min_confidence: 0.4, max_itemset: 2 };

/// Largest region count whose encoded matrix fits in `payload_mb` megabytes.
pub fn regions_for_payload(payload_mb: f64, region_offset: usize) -> usize {
    let target = (payload_mb * 1e6) as usize;
    let (mut lo, mut hi) = (1usize, target.max(1));
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if encoded_len(BENCH_GENES, mid, region_offset) <= target {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

fn to_literal<T: Serialize>(value: &T) -> InputBinding {
    InputBinding::literal(serde_json::to_vec(value).expect("parameters serialize"))
}

struct Builder {
    seed: u64,
    payload_mb: f64,
    next_offset: usize,
    sites: Vec<String>,
}

impl Builder {
    fn source(&mut self, id: &str, site: &str, source_index: u64) -> TaskNode {
        let n_regions = regions_for_payload(self.payload_mb, self.next_offset);
        let params = GenParams {
            seed: self.seed.wrapping_add(source_index),
            n_genes: BENCH_GENES,
            n_regions,
            density: BENCH_DENSITY,
            region_offset: self.next_offset,
        };
        self.next_offset += n_regions;
        TaskNode::new(id, site, "gen_expression", vec![to_literal(&params)])
    }

    fn site(&self, i: usize) -> &str {
        &self.sites[i % self.sites.len()]
    }

    fn need_sites(&self, pattern: Pattern, need: usize) -> Result<(), BenchError> {
        if self.sites.len() < need {
            return Err(BenchError::TooFewSites { pattern, need, have: self.sites.len() });
        }
        Ok(())
    }
}

fn mine(id: &str, site: &str, sources: &[&str]) -> TaskNode {
    let mut inputs = vec![to_literal(&BENCH_MINING)];
    inputs.extend(sources.iter().map(|s| InputBinding::edge(*s)));
    TaskNode::new(id, site, "mine_rules", inputs)
}

fn compose(id: &str, site: &str, source: &str) -> TaskNode {
    let target = ExprTree::op(SetOp::Intersect, ExprTree::gene("g001"), ExprTree::gene("g002"));
    let params = ComposeParams { target: TargetSpec::Tree(target), max_leaves: 3 };
    TaskNode::new(id, site, "compose_pattern", vec![to_literal(&params), InputBinding::edge(source)])
}

/// The benchmark workflow for `spec`, placed on the sites of `topology` in
/// listed order.
///
/// - pipeline: a source, then complement stages, ending in a miner when
///   `n ≥ 2`; stage `i` runs on site `i mod |sites|`.
/// - fan_in: `n` sources on sites `0..n` feeding one collating miner on
///   site `n`.
/// - fan_out: one source on site 0 feeding `n` consumers on sites `1..=n`,
///   alternating miner and composer.
/// - fig3_scenario: sources `WS-1..WS-3` feeding a `mine` task on four
///   distinct sites. `n` is ignored.
///
/// Every source emits close to `payload_mb` megabytes of matrix data.
pub fn build_pattern(spec: &BenchmarkSpec, topology: &Topology) -> Result<WorkflowDefinition, BenchError> {
    spec.validate()?;
    let mut b = Builder {
        seed: spec.seed,
        payload_mb: spec.payload_mb,
        next_offset: 0,
        sites: topology.site_ids().map(str::to_string).collect(),
    };
    b.need_sites(spec.pattern, 1)?;
    let n = spec.n;
    let mut tasks = Vec::new();
    match spec.pattern {
        Pattern::Pipeline => {
            let site0 = b.site(0).to_string();
            tasks.push(b.source("stage-1", &site0, 0));
            for i in 1..n {
                let id = format!("stage-{}", i + 1);
                let prev = format!("stage-{i}");
                let site = b.site(i);
                tasks.push(if i + 1 == n {
                    mine(&id, site, &[&prev])
                } else {
                    TaskNode::new(&id, site, "complement", vec![InputBinding::edge(prev)])
                });
            }
        }
        Pattern::FanIn => {
            b.need_sites(spec.pattern, n + 1)?;
            let ids: Vec<String> = (1..=n).map(|i| format!("source-{i}")).collect();
            for (i, id) in ids.iter().enumerate() {
                let site = b.site(i).to_string();
                tasks.push(b.source(id, &site, i as u64));
            }
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            tasks.push(mine("mine", b.site(n), &refs));
        }
        Pattern::FanOut => {
            b.need_sites(spec.pattern, n + 1)?;
            let site0 = b.site(0).to_string();
            tasks.push(b.source("source", &site0, 0));
            for i in 1..=n {
                let id = format!("consumer-{i}");
                tasks.push(if i % 2 == 1 {
                    mine(&id, b.site(i), &["source"])
                } else {
                    compose(&id, b.site(i), "source")
                });
            }
        }
        Pattern::Fig3Scenario => {
            b.need_sites(spec.pattern, 4)?;
            for i in 0..3 {
                let site = b.site(i).to_string();
                tasks.push(b.source(&format!("WS-{}", i + 1), &site, i as u64));
            }
            tasks.push(mine("mine", b.site(3), &["WS-1", "WS-2", "WS-3"]));
        }
    }
    let id = format!("{}-n{}-{}mb-s{}", spec.pattern, n, spec.payload_mb, spec.seed);
    Ok(WorkflowDefinition::new(&id, tasks, vec![])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(n: usize) -> Topology {
        let ids: Vec<String> = (1..=n).map(|i| format!("P-{i}")).collect();
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        Topology::free(&ids)
    }

    fn shape(def: &WorkflowDefinition) -> Vec<(String, String, Vec<String>)> {
        def.tasks
            .iter()
            .map(|t| (t.task_id.clone(), t.site_id.clone(), t.edge_sources().map(str::to_string).collect()))
            .collect()
    }

    #[test]
    fn payload_sizing() {
        let n = regions_for_payload(1.0, 0);
        assert!(encoded_len(BENCH_GENES, n, 0) <= 1_000_000);
        assert!(encoded_len(BENCH_GENES, n + 1, 0) > 1_000_000);
        assert!(encoded_len(BENCH_GENES, n, 0) > 999_980);
    }

    #[test]
    fn fan_in_of_three_is_the_lab_scenario_shape() {
        let def = build_pattern(&BenchmarkSpec::new(Pattern::FanIn, 3, 1.0, 42), &topo(4)).unwrap();
        let s = shape(&def);
        assert_eq!(s.len(), 4);
        assert_eq!(s[3], ("mine".into(), "P-4".into(), vec!["source-1".into(), "source-2".into(), "source-3".into()]));
        let sites: Vec<&str> = s[..3].iter().map(|t| t.1.as_str()).collect();
        assert_eq!(sites, ["P-1", "P-2", "P-3"]);
        assert_eq!(def.sinks, ["mine"]);
    }

    #[test]
    fn fig3_names() {
        let def = build_pattern(&BenchmarkSpec::new(Pattern::Fig3Scenario, 1, 1.0, 42), &topo(4)).unwrap();
        let ids: Vec<&str> = def.tasks.iter().map(|t| t.task_id.as_str()).collect();
        assert_eq!(ids, ["WS-1", "WS-2", "WS-3", "mine"]);
    }

    #[test]
    fn pipeline_of_one_is_a_single_task() {
        let def = build_pattern(&BenchmarkSpec::new(Pattern::Pipeline, 1, 1.0, 1), &topo(1)).unwrap();
        assert_eq!(def.tasks.len(), 1);
        assert_eq!(def.sinks, ["stage-1"]);
    }

    #[test]
    fn pipeline_round_robin() {
        let def = build_pattern(&BenchmarkSpec::new(Pattern::Pipeline, 4, 1.0, 1), &topo(3)).unwrap();
        let s = shape(&def);
        let sites: Vec<&str> = s.iter().map(|t| t.1.as_str()).collect();
        assert_eq!(sites, ["P-1", "P-2", "P-3", "P-1"]);
        let ops: Vec<&str> = def.tasks.iter().map(|t| t.service_op.as_str()).collect();
        assert_eq!(ops, ["gen_expression", "complement", "complement", "mine_rules"]);
    }

    #[test]
    fn fan_out_needs_a_site_per_consumer() {
        let err = build_pattern(&BenchmarkSpec::new(Pattern::FanOut, 4, 1.0, 1), &topo(3)).unwrap_err();
        assert!(matches!(err, BenchError::TooFewSites { need: 5, have: 3, .. }));
        let def = build_pattern(&BenchmarkSpec::new(Pattern::FanOut, 2, 1.0, 1), &topo(3)).unwrap();
        assert_eq!(def.sinks, ["consumer-1", "consumer-2"]);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = BenchmarkSpec::new(Pattern::FanIn, 0, 1.0, 1);
        assert!(matches!(spec.validate(), Err(BenchError::InvalidSpec(_))));
        spec.n = 1;
        spec.payload_mb = 0.0;
        assert!(spec.validate().is_err());
        spec.payload_mb = 1.0;
        spec.repetitions = 0;
        assert!(spec.validate().is_err());
        assert!("fan-in".parse::<Pattern>().is_err());
        assert_eq!("fig3_scenario".parse::<Pattern>().unwrap(), Pattern::Fig3Scenario);
    }
}
