//! Apriori association rules over spatial regions (transactions) and genes
//! (items).

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::bits::RegionSet;
use super::matrix::ExpressionMatrix;
use super::par::{self, Exec};
use super::WorkloadError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub antecedent: Vec<String>,
    pub consequent: Vec<String>,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
}

impl AssociationRule {
    /// Builds a rule from raw region counts over `n` regions.
    pub fn from_counts(
        antecedent: Vec<String>,
        consequent: Vec<String>,
        count_union: u64,
        count_antecedent: u64,
        count_consequent: u64,
        n: u64,
    ) -> Self {
        let support = count_union as f64 / n as f64;
        let confidence = count_union as f64 / count_antecedent as f64;
        let lift = confidence / (count_consequent as f64 / n as f64);
        AssociationRule { antecedent, consequent, support, confidence, lift }
    }

    /// Output order: lift descending, support descending, then the rule's
    /// gene names lexicographically.
    pub fn output_order(a: &Self, b: &Self) -> Ordering {
        b.lift
            .total_cmp(&a.lift)
            .then(b.support.total_cmp(&a.support))
            .then_with(|| a.antecedent.cmp(&b.antecedent))
            .then_with(|| a.consequent.cmp(&b.consequent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningParams {
    pub min_support: f64,
    pub min_confidence: f64,
    pub max_itemset: usize,
}

impl MiningParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.min_support) || !in_unit(self.min_confidence) {
            return Err(WorkloadError::BadParams(format!(
                "thresholds must lie in (0, 1], got support {} confidence {}",
                self.min_support, self.min_confidence
            )));
        }
        if self.max_itemset < 2 {
            return Err(WorkloadError::BadParams("max_itemset must be at least 2".into()));
        }
        Ok(())
    }
}

/// Shared threshold test so every counting path agrees on boundary cases.
pub fn meets_support(count: u64, n: u64, min_support: f64) -> bool {
    count as f64 / n as f64 >= min_support
}

pub fn meets_confidence(count_union: u64, count_antecedent: u64, min_confidence: f64) -> bool {
    count_union as f64 / count_antecedent as f64 >= min_confidence
}

pub fn mine_rules(
    m: &ExpressionMatrix,
    min_support: f64,
    min_confidence: f64,
    max_itemset: usize,
) -> Result<Vec<AssociationRule>, WorkloadError> {
    mine_rules_with(m, &MiningParams { min_support, min_confidence, max_itemset }, Exec::default())
}

type Itemset = Vec<usize>;

pub fn mine_rules_with(
    m: &ExpressionMatrix,
    params: &MiningParams,
    exec: Exec,
) -> Result<Vec<AssociationRule>, WorkloadError> {
    params.validate()?;
    let n = m.n_regions() as u64;
    if n == 0 || m.n_genes() == 0 {
        return Ok(Vec::new());
    }
    let genes = m.gene_sets(exec);

    // Frequent itemsets per level with their region sets.
    let mut counts: HashMap<Itemset, u64> = HashMap::new();
    let mut level: Vec<(Itemset, RegionSet)> = genes
        .iter()
        .enumerate()
        .filter(|(_, s)| meets_support(s.count(), n, params.min_support))
        .map(|(g, s)| (vec![g], s.clone()))
        .collect();
    let mut frequent: Vec<Itemset> = Vec::new();

    for k in 1..=params.max_itemset {
        for (items, set) in &level {
            counts.insert(items.clone(), set.count());
            if k >= 2 {
                frequent.push(items.clone());
            }
        }
        if k == params.max_itemset {
            break;
        }
        let candidates = join_candidates(&level, &counts);
        let counted = par::map(exec, &candidates, |(items, base)| {
            let last = *items.last().expect("non-empty candidate");
            let set = level[*base].1.intersect(&genes[last]);
            let c = set.count();
            (c, set)
        });
        level = candidates
            .into_iter()
            .zip(counted)
            .filter(|(_, (c, _))| meets_support(*c, n, params.min_support))
            .map(|((items, _), (_, set))| (items, set))
            .collect();
        if level.is_empty() {
            break;
        }
    }

    let names = |items: &[usize]| items.iter().map(|g| m.genes()[*g].clone()).collect::<Vec<_>>();
    let per_itemset = par::map(exec, &frequent, |items| {
        let count_union = counts[items];
        let k = items.len();
        let mut out = Vec::new();
        // Every non-empty proper subset as antecedent.
        for mask in 1..(1u32 << k) - 1 {
            let (ante, cons): (Vec<usize>, Vec<usize>) = (0..k).partition(|i| mask & (1 << i) != 0);
            let ante: Itemset = ante.into_iter().map(|i| items[i]).collect();
            let cons: Itemset = cons.into_iter().map(|i| items[i]).collect();
            let count_ante = counts[&ante];
            if !meets_confidence(count_union, count_ante, params.min_confidence) {
                continue;
            }
            let mut rule =
                AssociationRule::from_counts(names(&ante), names(&cons), count_union, count_ante, counts[&cons], n);
            rule.antecedent.sort();
            rule.consequent.sort();
            out.push(rule);
        }
        out
    });
    let mut rules: Vec<AssociationRule> = per_itemset.into_iter().flatten().collect();
    rules.sort_by(AssociationRule::output_order);
    Ok(rules)
}

/// Apriori join: extend each frequent k-itemset by a larger frequent item
/// sharing its prefix, keeping candidates whose every k-subset is frequent.
/// Returns each candidate with the index of the level entry it extends.
fn join_candidates(level: &[(Itemset, RegionSet)], counts: &HashMap<Itemset, u64>) -> Vec<(Itemset, usize)> {
    let mut out = Vec::new();
    for (i, (a, _)) in level.iter().enumerate() {
        for (b, _) in &level[i + 1..] {
            let k = a.len();
            if a[..k - 1] != b[..k - 1] || a[k - 1] >= b[k - 1] {
                continue;
            }
            let mut cand = a.clone();
            cand.push(b[k - 1]);
            let all_subsets_frequent = (0..cand.len()).all(|skip| {
                let sub: Itemset = cand.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, g)| *g).collect();
                counts.contains_key(&sub)
            });
            if all_subsets_frequent {
                out.push((cand, i));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(genes: &[&str], rows: &[&[&str]]) -> ExpressionMatrix {
        ExpressionMatrix::from_rows(
            genes.iter().map(|g| g.to_string()).collect(),
            (0..rows.len()).map(|i| format!("r{}", i + 1)).collect(),
            &rows.iter().map(|r| genes.iter().map(|g| r.contains(g)).collect()).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn find<'a>(rules: &'a [AssociationRule], a: &[&str], b: &[&str]) -> Option<&'a AssociationRule> {
        rules.iter().find(|r| r.antecedent == a && r.consequent == b)
    }

    #[test]
    fn four_transaction_example() {
        // r1{A,B} r2{A,B} r3{A} r4{B,C}
        let m = matrix(&["A", "B", "C"], &[&["A", "B"], &["A", "B"], &["A"], &["B", "C"]]);
        let rules = mine_rules(&m, 0.25, 0.1, 2).unwrap();
        let r = find(&rules, &["A"], &["B"]).expect("A=>B mined");
        assert_eq!(r.support, 0.5);
        assert!((r.confidence - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.lift - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn saturated_matrix() {
        let all: &[&str] = &["A", "B", "C"];
        let m = matrix(&["A", "B", "C"], &[all; 5]);
        let rules = mine_rules(&m, 0.5, 0.5, 2).unwrap();
        assert_eq!(rules.len(), 6);
        for r in &rules {
            assert_eq!((r.support, r.confidence, r.lift), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn output_is_sorted_and_itemset_bounded() {
        let m = super::super::matrix::gen_expression(9, 6, 60, 0.45).unwrap();
        let rules = mine_rules(&m, 0.05, 0.3, 3).unwrap();
        assert!(!rules.is_empty());
        assert!(rules.windows(2).all(|w| AssociationRule::output_order(&w[0], &w[1]) != Ordering::Greater));
        assert!(rules.iter().all(|r| r.antecedent.len() + r.consequent.len() <= 3));
    }

    #[test]
    fn bad_params() {
        let m = matrix(&["A"], &[&["A"]]);
        for (s, c, k) in [(0.0, 0.5, 2), (1.5, 0.5, 2), (0.5, 0.0, 2), (0.5, 0.5, 1)] {
            assert!(matches!(mine_rules(&m, s, c, k), Err(WorkloadError::BadParams(_))));
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let m = super::super::matrix::gen_expression(4, 10, 3000, 0.4).unwrap();
        let p = MiningParams { min_support: 0.05, min_confidence: 0.3, max_itemset: 4 };
        assert_eq!(
            mine_rules_with(&m, &p, Exec::Sequential).unwrap(),
            mine_rules_with(&m, &p, Exec::Parallel).unwrap()
        );
    }

    #[test]
    fn rule_record_carries_reported_format() {
        let r = AssociationRule {
            antecedent: vec!["Brap".into(), "Zfp354b".into()],
            consequent: vec!["9830124H08Rik".into()],
            support: 0.060,
            confidence: 0.979,
            lift: 10.2,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"antecedent":["Brap","Zfp354b"],"consequent":["9830124H08Rik"],"support":0.06,"confidence":0.979,"lift":10.2}"#
        );
        assert_eq!(serde_json::from_str::<AssociationRule>(&json).unwrap(), r);
    }
}
