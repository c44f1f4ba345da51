//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use circulate::transport::{Header, Message, Topology, WireInput};
use circulate::workflow::DataReference;
use circulate::workloads::{ExpressionMatrix, RegionSet, SetOp};
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MIB: usize = 1 << 20;

pub fn site_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("P-{i}")).collect()
}

pub fn free_topology(n: usize) -> Topology {
    let names = site_names(n);
    Topology::free(&names.iter().map(String::as_str).collect::<Vec<_>>())
}

pub fn wan_topology(n: usize) -> Topology {
    let names = site_names(n);
    Topology::default_wan(&names.iter().map(String::as_str).collect::<Vec<_>>())
}

// ---- codec -------------------------------------------------------------

fn text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("(?s).{0,12}").unwrap()
}

fn reference() -> impl Strategy<Value = DataReference> {
    (text(), text(), any::<u64>(), "[0-9a-f]{64}").prop_map(|(ref_id, proxy_site, size_bytes, content_digest)| {
        DataReference { ref_id, proxy_site, size_bytes, content_digest }
    })
}

fn wire_input() -> impl Strategy<Value = WireInput> {
    prop_oneof![
        reference().prop_map(|reference| WireInput::Ref { reference }),
        any::<u64>().prop_map(|len| WireInput::Literal { literal: true, len }),
    ]
}

pub fn header() -> impl Strategy<Value = Header> {
    let refs = || proptest::collection::vec(text(), 0..4);
    prop_oneof![
        (text(), text(), text(), proptest::collection::vec(wire_input(), 0..4), any::<bool>()).prop_map(
            |(run_id, task_id, service_op, inputs, return_payload)| Header::InvokeRequest {
                run_id,
                task_id,
                service_op,
                inputs,
                return_payload
            }
        ),
        (text(), text(), proptest::option::of(reference()))
            .prop_map(|(run_id, task_id, reference)| Header::InvokeResponse { run_id, task_id, reference }),
        (text(), refs(), text(), proptest::option::of(text())).prop_map(|(run_id, refs, target_site, source_site)| {
            Header::TransferRequest { run_id, refs, target_site, source_site }
        }),
        (text(), refs(), any::<u64>()).prop_map(|(run_id, refs, pushed_payload_bytes)| Header::TransferAck {
            run_id,
            refs,
            pushed_payload_bytes
        }),
        (text(), text()).prop_map(|(run_id, ref_id)| Header::MaterializeRequest { run_id, ref_id }),
        (text(), text()).prop_map(|(run_id, ref_id)| Header::MaterializeResponse { run_id, ref_id }),
        text().prop_map(|run_id| Header::FlushRequest { run_id }),
        text().prop_map(|run_id| Header::FlushAck { run_id }),
        (text(), text(), text()).prop_map(|(run_id, code, detail)| Header::Error { run_id, code, detail }),
    ]
}

/// Payload lengths cover 0 and 1 MiB explicitly; bytes come from a seed so
/// large payloads stay cheap to generate.
pub fn payload() -> impl Strategy<Value = Vec<u8>> {
    let len = prop_oneof![1 => Just(0usize), 1 => Just(MIB), 1 => 0..=16usize, 3 => 0..=MIB];
    (len, any::<u64>()).prop_map(|(len, seed)| {
        let mut bytes = vec![0u8; len];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
        bytes
    })
}

pub fn message() -> impl Strategy<Value = Message> {
    (header(), payload()).prop_map(|(header, payload)| {
        if header.may_carry_payload() {
            Message::with_payload(header, payload)
        } else {
            Message::control(header)
        }
    })
}

// ---- workloads oracles -------------------------------------------------

pub fn random_matrix(seed: u64, max_genes: usize, max_regions: usize) -> ExpressionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_genes = rng.gen_range(1..=max_genes);
    let n_regions = rng.gen_range(1..=max_regions);
    let density = rng.gen_range(0.15..0.85);
    let rows: Vec<Vec<bool>> = (0..n_regions).map(|_| (0..n_genes).map(|_| rng.gen_bool(density)).collect()).collect();
    ExpressionMatrix::from_rows(
        (0..n_genes).map(|g| format!("G{g}")).collect(),
        (0..n_regions).map(|r| format!("r{r}")).collect(),
        &rows,
    )
    .unwrap()
}

pub fn random_target(seed: u64, n_regions: usize) -> RegionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x007a_26e7);
    RegionSet::from_indices(n_regions, (0..n_regions).filter(|_| rng.gen_bool(0.4)))
}

/// A rule as plain data: sorted gene names and raw counts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BruteRule {
    pub antecedent: Vec<String>,
    pub consequent: Vec<String>,
    pub count_union: u64,
    pub count_antecedent: u64,
    pub count_consequent: u64,
}

fn count_all(m: &ExpressionMatrix, genes: &[usize]) -> u64 {
    (0..m.n_regions()).filter(|&r| genes.iter().all(|&g| m.get(r, g))).count() as u64
}

/// Every rule A => B over disjoint non-empty gene sets with |A ∪ B| ≤ k,
/// found by scanning rows for every candidate pair.
pub fn brute_force_rules(m: &ExpressionMatrix, min_support: f64, min_confidence: f64, k: usize) -> BTreeSet<BruteRule> {
    let n_genes = m.n_genes();
    let n = m.n_regions() as u64;
    let names = |mask: u32| -> Vec<String> {
        let mut v: Vec<String> = (0..n_genes).filter(|g| mask >> g & 1 == 1).map(|g| m.genes()[g].clone()).collect();
        v.sort();
        v
    };
    let members = |mask: u32| -> Vec<usize> { (0..n_genes).filter(|g| mask >> g & 1 == 1).collect() };
    let mut out = BTreeSet::new();
    for a in 1u32..(1 << n_genes) {
        for b in 1u32..(1 << n_genes) {
            if a & b != 0 || (a | b).count_ones() as usize > k {
                continue;
            }
            let cu = count_all(m, &members(a | b));
            let ca = count_all(m, &members(a));
            if cu == 0 || (cu as f64 / n as f64) < min_support || (cu as f64 / ca as f64) < min_confidence {
                continue;
            }
            out.insert(BruteRule {
                antecedent: names(a),
                consequent: names(b),
                count_union: cu,
                count_antecedent: ca,
                count_consequent: count_all(m, &members(b)),
            });
        }
    }
    out
}

fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Best similarity over every tree of one leaf or two distinct leaves.
pub fn exhaustive_best(m: &ExpressionMatrix, target: &RegionSet) -> f64 {
    let target: BTreeSet<usize> = target.iter().collect();
    let set = |g: usize| -> BTreeSet<usize> { (0..m.n_regions()).filter(|&r| m.get(r, g)).collect() };
    let mut best = f64::NEG_INFINITY;
    for a in 0..m.n_genes() {
        best = best.max(jaccard(&set(a), &target));
        for b in 0..m.n_genes() {
            if a == b {
                continue;
            }
            for op in SetOp::ALL {
                let (sa, sb) = (set(a), set(b));
                let p: BTreeSet<usize> = match op {
                    SetOp::Union => sa.union(&sb).copied().collect(),
                    SetOp::Intersect => sa.intersection(&sb).copied().collect(),
                    SetOp::Subtract => sa.difference(&sb).copied().collect(),
                };
                best = best.max(jaccard(&p, &target));
            }
        }
    }
    best
}
