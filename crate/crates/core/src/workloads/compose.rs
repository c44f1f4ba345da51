//! Composing a target spatial pattern from gene expression patterns joined
//! by set operations.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::bits::RegionSet;
use super::matrix::ExpressionMatrix;
use super::par::{self, Exec};
use super::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetOp {
    Union,
    Intersect,
    Subtract,
}

impl SetOp {
    /// Tie-break order.
    pub const ALL: [SetOp; 3] = [SetOp::Union, SetOp::Intersect, SetOp::Subtract];

    pub fn apply(self, a: &RegionSet, b: &RegionSet) -> RegionSet {
        match self {
            SetOp::Union => a.union(b),
            SetOp::Intersect => a.intersect(b),
            SetOp::Subtract => a.subtract(b),
        }
    }
}

/// Binary expression over gene patterns. Wire form is
/// `{"gene": name}` or `{"op": "union"|"intersect"|"subtract", "left": …, "right": …}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprTree {
    Gene { gene: String },
    Op { op: SetOp, left: Box<ExprTree>, right: Box<ExprTree> },
}

impl ExprTree {
    pub fn gene(name: impl Into<String>) -> Self {
        ExprTree::Gene { gene: name.into() }
    }

    pub fn op(op: SetOp, left: ExprTree, right: ExprTree) -> Self {
        ExprTree::Op { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn leaves(&self) -> Vec<&str> {
        match self {
            ExprTree::Gene { gene } => vec![gene.as_str()],
            ExprTree::Op { left, right, .. } => {
                let mut l = left.leaves();
                l.extend(right.leaves());
                l
            }
        }
    }

    pub fn evaluate(&self, m: &ExpressionMatrix, sets: &[RegionSet]) -> Result<RegionSet, WorkloadError> {
        match self {
            ExprTree::Gene { gene } => m
                .gene_index(gene)
                .map(|i| sets[i].clone())
                .ok_or_else(|| WorkloadError::BadParams(format!("unknown gene {gene:?}"))),
            ExprTree::Op { op, left, right } => Ok(op.apply(&left.evaluate(m, sets)?, &right.evaluate(m, sets)?)),
        }
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprTree::Gene { gene } => f.write_str(gene),
            ExprTree::Op { op, left, right } => write!(f, "{op:?}({left}, {right})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionResult {
    pub tree: ExprTree,
    pub similarity: f64,
}

pub fn compose_pattern(
    m: &ExpressionMatrix,
    target: &RegionSet,
    max_leaves: usize,
) -> Result<CompositionResult, WorkloadError> {
    compose_pattern_with(m, target, max_leaves, Exec::default()).map(|(r, _)| r)
}

/// Returns the result and the similarity after each accepted step.
///
/// Trees of up to two leaves are searched exhaustively; larger trees grow
/// greedily from the best of those by appending `(op, gene)` to the current
/// tree while that strictly improves similarity. Ties keep the earlier
/// candidate: fewer leaves, then op order, then gene name order.
pub fn compose_pattern_with(
    m: &ExpressionMatrix,
    target: &RegionSet,
    max_leaves: usize,
    exec: Exec,
) -> Result<(CompositionResult, Vec<f64>), WorkloadError> {
    if max_leaves == 0 {
        return Err(WorkloadError::BadParams("max_leaves must be at least 1".into()));
    }
    if m.n_genes() == 0 {
        return Err(WorkloadError::BadParams("matrix has no genes".into()));
    }
    if target.len() != m.n_regions() {
        return Err(WorkloadError::BadParams("target is not over this matrix's regions".into()));
    }
    let sets = m.gene_sets(exec);
    let mut by_name: Vec<usize> = (0..m.n_genes()).collect();
    by_name.sort_by(|a, b| m.genes()[*a].cmp(&m.genes()[*b]));

    let singles = par::map(exec, &by_name, |g| sets[*g].jaccard(target));
    let (mut best_i, mut best) = (0, singles[0]);
    for (i, s) in singles.iter().enumerate() {
        if *s > best {
            (best_i, best) = (i, *s);
        }
    }
    let mut used = vec![by_name[best_i]];
    let mut tree = ExprTree::gene(&m.genes()[by_name[best_i]]);
    let mut pattern = sets[by_name[best_i]].clone();
    let mut trace = vec![best];

    if max_leaves >= 2 {
        let mut pairs: Vec<(SetOp, usize, usize)> = Vec::new();
        for op in SetOp::ALL {
            for a in &by_name {
                pairs.extend(by_name.iter().filter(|b| *b != a).map(|b| (op, *a, *b)));
            }
        }
        let scores = par::map(exec, &pairs, |(op, a, b)| op.apply(&sets[*a], &sets[*b]).jaccard(target));
        let mut pick = None;
        for (i, s) in scores.iter().enumerate() {
            if *s > best {
                (pick, best) = (Some(i), *s);
            }
        }
        if let Some(i) = pick {
            let (op, a, b) = pairs[i];
            tree = ExprTree::op(op, ExprTree::gene(&m.genes()[a]), ExprTree::gene(&m.genes()[b]));
            pattern = op.apply(&sets[a], &sets[b]);
            used = vec![a, b];
            trace.push(best);
        }
    }

    while used.len() >= 2 && used.len() < max_leaves {
        let moves: Vec<(SetOp, usize)> =
            SetOp::ALL.iter().flat_map(|op| by_name.iter().filter(|g| !used.contains(g)).map(|g| (*op, *g))).collect();
        let scores = par::map(exec, &moves, |(op, g)| op.apply(&pattern, &sets[*g]).jaccard(target));
        let mut pick = None;
        for (i, s) in scores.iter().enumerate() {
            if *s > best {
                (pick, best) = (Some(i), *s);
            }
        }
        let Some(i) = pick else { break };
        let (op, g) = moves[i];
        pattern = op.apply(&pattern, &sets[g]);
        tree = ExprTree::op(op, tree, ExprTree::gene(&m.genes()[g]));
        used.push(g);
        trace.push(best);
    }

    Ok((CompositionResult { tree, similarity: best }, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(genes: &[(&str, &[usize])], n_regions: usize) -> ExpressionMatrix {
        let rows: Vec<Vec<bool>> =
            (0..n_regions).map(|r| genes.iter().map(|(_, on)| on.contains(&r)).collect()).collect();
        ExpressionMatrix::from_rows(
            genes.iter().map(|(g, _)| g.to_string()).collect(),
            (0..n_regions).map(|r| format!("r{}", r + 1)).collect(),
            &rows,
        )
        .unwrap()
    }

    #[test]
    fn identity_target() {
        let m = super::super::matrix::gen_expression(3, 5, 40, 0.4).unwrap();
        let sets = m.gene_sets(Exec::Sequential);
        let r = compose_pattern(&m, &sets[2], 3).unwrap();
        assert_eq!(r.similarity, 1.0);
        assert_eq!(r.tree.evaluate(&m, &sets).unwrap(), sets[2]);
    }

    #[test]
    fn disjoint_target_single_leaf() {
        let m = matrix(&[("gA", &[0, 1]), ("gB", &[2])], 5);
        let target = RegionSet::from_indices(5, [3, 4]);
        let r = compose_pattern(&m, &target, 1).unwrap();
        assert_eq!(r.similarity, 0.0);
        assert_eq!(r.tree, ExprTree::gene("gA"));
    }

    #[test]
    fn union_of_two_genes() {
        // gA={r1,r2}, gB={r3}, target {r1,r2,r3}
        let m = matrix(&[("gA", &[0, 1]), ("gB", &[2])], 3);
        let target = RegionSet::from_indices(3, [0, 1, 2]);
        let r = compose_pattern(&m, &target, 2).unwrap();
        assert_eq!(r.tree, ExprTree::op(SetOp::Union, ExprTree::gene("gA"), ExprTree::gene("gB")));
        assert_eq!(r.similarity, 1.0);
    }

    #[test]
    fn pair_search_beats_best_single_start() {
        // The best single gene (gC) is not part of the best pair.
        let m = matrix(&[("gA", &[0, 1]), ("gB", &[2, 3]), ("gC", &[0, 1, 2, 4])], 5);
        let target = RegionSet::from_indices(5, [0, 1, 2, 3]);
        let r = compose_pattern(&m, &target, 2).unwrap();
        assert_eq!(r.similarity, 1.0);
    }

    #[test]
    fn greedy_trace_increases() {
        let m = super::super::matrix::gen_expression(12, 10, 200, 0.3).unwrap();
        let target = m.gene_sets(Exec::Sequential)[0].union(&RegionSet::from_indices(200, 0..20));
        let (r, trace) = compose_pattern_with(&m, &target, 5, Exec::Sequential).unwrap();
        assert!(trace.windows(2).all(|w| w[1] > w[0]), "{trace:?}");
        assert_eq!(*trace.last().unwrap(), r.similarity);
        assert!(r.tree.leaves().len() <= 5);
        let (p, _) = compose_pattern_with(&m, &target, 5, Exec::Parallel).unwrap();
        assert_eq!(p, r);
    }

    #[test]
    fn bad_params() {
        let m = matrix(&[("gA", &[0])], 2);
        assert!(compose_pattern(&m, &RegionSet::empty(2), 0).is_err());
        assert!(compose_pattern(&m, &RegionSet::empty(3), 1).is_err());
    }

    #[test]
    fn tree_wire_form() {
        let tree = ExprTree::op(
            SetOp::Union,
            ExprTree::op(SetOp::Intersect, ExprTree::gene("Rnf34"), ExprTree::gene("Pax5")),
            ExprTree::gene("Anapc11"),
        );
        let r = CompositionResult { tree, similarity: 0.753 };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"tree":{"op":"union","left":{"op":"intersect","left":{"gene":"Rnf34"},"right":{"gene":"Pax5"}},"right":{"gene":"Anapc11"}},"similarity":0.753}"#
        );
        let back: CompositionResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.tree.leaves(), ["Rnf34", "Pax5", "Anapc11"]);
    }
}
