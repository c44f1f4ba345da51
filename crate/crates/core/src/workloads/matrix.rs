use std::collections::HashSet;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bits::RegionSet;
use super::par::{self, Exec};
use super::WorkloadError;

/// Binarised expression of genes (columns) over spatial regions (rows).
///
/// Cells are stored row-major, each row bit-packed into `ceil(genes / 8)`
/// bytes, most significant bit first; padding bits are zero. This is also
/// the base64 `cells` field of the wire form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpressionMatrix {
    genes: Vec<String>,
    regions: Vec<String>,
    cells: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDoc {
    genes: Vec<String>,
    regions: Vec<String>,
    cells: String,
}

fn row_bytes(n_genes: usize) -> usize {
    n_genes.div_ceil(8)
}

fn check_unique(kind: &str, names: &[String]) -> Result<(), WorkloadError> {
    let mut seen: HashSet<&str> = HashSet::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(WorkloadError::Malformed(format!("duplicate {kind} name {n:?}")));
        }
    }
    Ok(())
}

impl ExpressionMatrix {
    pub fn from_rows(genes: Vec<String>, regions: Vec<String>, rows: &[Vec<bool>]) -> Result<Self, WorkloadError> {
        if rows.len() != regions.len() || rows.iter().any(|r| r.len() != genes.len()) {
            return Err(WorkloadError::Malformed("cell grid does not match regions x genes".into()));
        }
        let rb = row_bytes(genes.len());
        let mut cells = vec![0u8; rb * regions.len()];
        for (r, row) in rows.iter().enumerate() {
            for (g, on) in row.iter().enumerate() {
                if *on {
                    cells[r * rb + g / 8] |= 0x80 >> (g % 8);
                }
            }
        }
        Self::from_packed(genes, regions, cells)
    }

    fn from_packed(genes: Vec<String>, regions: Vec<String>, cells: Vec<u8>) -> Result<Self, WorkloadError> {
        check_unique("gene", &genes)?;
        check_unique("region", &regions)?;
        let rb = row_bytes(genes.len());
        if cells.len() != rb * regions.len() {
            return Err(WorkloadError::Malformed(format!(
                "cells hold {} bytes, expected {} for {} regions x {} genes",
                cells.len(),
                rb * regions.len(),
                regions.len(),
                genes.len()
            )));
        }
        let pad = (rb * 8 - genes.len()) as u32;
        if pad > 0 {
            let mask = (1u8 << pad) - 1;
            if cells.chunks(rb).any(|row| row[rb - 1] & mask != 0) {
                return Err(WorkloadError::Malformed("non-zero row padding bits".into()));
            }
        }
        Ok(ExpressionMatrix { genes, regions, cells })
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn get(&self, region: usize, gene: usize) -> bool {
        let rb = row_bytes(self.genes.len());
        self.cells[region * rb + gene / 8] & (0x80 >> (gene % 8)) != 0
    }

    pub fn row(&self, region: usize) -> Vec<bool> {
        (0..self.n_genes()).map(|g| self.get(region, g)).collect()
    }

    pub fn gene_index(&self, name: &str) -> Option<usize> {
        self.genes.iter().position(|g| g == name)
    }

    /// Regions expressing each gene, one set per gene column.
    pub fn gene_sets(&self, exec: Exec) -> Vec<RegionSet> {
        let rb = row_bytes(self.n_genes());
        let n = self.n_regions();
        par::map_range(exec, self.n_genes(), |g| {
            let (byte, shift) = (g / 8, 7 - g % 8);
            let words = (0..n.div_ceil(64))
                .map(|w| {
                    let rows = w * 64..n.min(w * 64 + 64);
                    rows.enumerate()
                        .fold(0u64, |acc, (i, r)| acc | (((self.cells[r * rb + byte] >> shift) & 1) as u64) << i)
                })
                .collect();
            RegionSet::from_words(n, words)
        })
    }

    pub fn region_set<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<RegionSet, WorkloadError> {
        let index: std::collections::HashMap<&str, usize> =
            self.regions.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let mut set = RegionSet::empty(self.n_regions());
        for n in names {
            let i = index.get(n).ok_or_else(|| WorkloadError::BadParams(format!("unknown region {n:?}")))?;
            set.insert(*i);
        }
        Ok(set)
    }

    /// Flips every cell.
    pub fn complement(&self) -> ExpressionMatrix {
        let rb = row_bytes(self.genes.len());
        let pad = (rb * 8 - self.genes.len()) as u32;
        let last_mask = if pad == 0 { 0xFF } else { !((1u8 << pad) - 1) };
        let cells = self
            .cells
            .chunks(rb.max(1))
            .flat_map(|row| row.iter().enumerate().map(move |(i, b)| if i + 1 == rb { !b & last_mask } else { !b }))
            .collect();
        ExpressionMatrix { genes: self.genes.clone(), regions: self.regions.clone(), cells }
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let doc =
            MatrixDoc { genes: self.genes.clone(), regions: self.regions.clone(), cells: B64.encode(&self.cells) };
        serde_json::to_vec(&doc).expect("matrix serializes")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, WorkloadError> {
        let doc: MatrixDoc = serde_json::from_slice(bytes).map_err(|e| WorkloadError::Malformed(e.to_string()))?;
        let cells = B64.decode(doc.cells.as_bytes()).map_err(|e| WorkloadError::Malformed(e.to_string()))?;
        Self::from_packed(doc.genes, doc.regions, cells)
    }
}

pub fn gene_name(i: usize) -> String {
    format!("g{i:03}")
}

pub fn region_name(i: usize) -> String {
    format!("r{i:03}")
}

fn json_names_len(names: impl Iterator<Item = usize>) -> usize {
    let mut total = 0;
    let mut count = 0usize;
    for len in names {
        total += len + 2;
        count += 1;
    }
    total + count.saturating_sub(1)
}

/// Length of [`ExpressionMatrix::to_json_bytes`] for a generated matrix,
/// without generating it.
pub fn encoded_len(n_genes: usize, n_regions: usize, region_offset: usize) -> usize {
    let name_len = |i: usize| 1 + i.to_string().len().max(3);
    let genes = json_names_len((0..n_genes).map(name_len));
    let regions = json_names_len((region_offset..region_offset + n_regions).map(name_len));
    let cells = 4 * (row_bytes(n_genes) * n_regions).div_ceil(3);
    r#"{"genes":[],"regions":[],"cells":""}"#.len() + genes + regions + cells
}

const CHUNK_ROWS: usize = 4096;

/// Seeded synthetic expression data: each cell is expressed with
/// probability `density`. Regions are named from `region_offset` upward so
/// several sources can produce disjoint region sets.
pub fn gen_expression(
    seed: u64,
    n_genes: usize,
    n_regions: usize,
    density: f64,
) -> Result<ExpressionMatrix, WorkloadError> {
    gen_expression_at(seed, n_genes, n_regions, density, 0, Exec::default())
}

pub fn gen_expression_at(
    seed: u64,
    n_genes: usize,
    n_regions: usize,
    density: f64,
    region_offset: usize,
    exec: Exec,
) -> Result<ExpressionMatrix, WorkloadError> {
    if n_genes == 0 || n_regions == 0 {
        return Err(WorkloadError::BadParams("n_genes and n_regions must be at least 1".into()));
    }
    if !(density > 0.0 && density < 1.0) {
        return Err(WorkloadError::BadParams(format!("density {density} outside (0, 1)")));
    }
    let rb = row_bytes(n_genes);
    let n_chunks = n_regions.div_ceil(CHUNK_ROWS);
    // A cell is expressed when a uniform 32-bit draw falls below this.
    let threshold = (density * 4_294_967_296.0) as u64;
    // One ChaCha stream per chunk keeps the output independent of scheduling.
    let chunks = par::map_range(exec, n_chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let rows = CHUNK_ROWS.min(n_regions - c * CHUNK_ROWS);
        let mut out = vec![0u8; rows * rb];
        for r in 0..rows {
            for g in 0..n_genes {
                if u64::from(rng.next_u32()) < threshold {
                    out[r * rb + g / 8] |= 0x80 >> (g % 8);
                }
            }
        }
        out
    });
    let genes = (0..n_genes).map(gene_name).collect();
    let regions = (region_offset..region_offset + n_regions).map(region_name).collect();
    Ok(ExpressionMatrix { genes, regions, cells: chunks.concat() })
}

/// Row concatenation in argument order.
pub fn collate(parts: &[ExpressionMatrix]) -> Result<ExpressionMatrix, WorkloadError> {
    let first = parts.first().ok_or_else(|| WorkloadError::BadParams("nothing to collate".into()))?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let total: usize = parts.iter().map(|p| p.regions.len()).sum();
    let mut seen: HashSet<&str> = HashSet::with_capacity(total);
    for p in parts {
        if p.genes != first.genes {
            return Err(WorkloadError::GeneMismatch);
        }
        for r in &p.regions {
            if !seen.insert(r) {
                return Err(WorkloadError::DuplicateRegion(r.clone()));
            }
        }
    }
    Ok(ExpressionMatrix {
        genes: first.genes.clone(),
        regions: parts.iter().flat_map(|p| p.regions.iter().cloned()).collect(),
        cells: parts.iter().flat_map(|p| p.cells.as_slice()).copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoded_len_is_exact() {
        for (g, r, off) in [(1, 1, 0), (9, 17, 995), (32, 1200, 0), (64, 3, 123_456)] {
            let m = gen_expression_at(1, g, r, 0.5, off, Exec::Sequential).unwrap();
            assert_eq!(m.to_json_bytes().len(), encoded_len(g, r, off), "{g}x{r}@{off}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_expression(7, 4, 10, 0.5).unwrap();
        let b = gen_expression(7, 4, 10, 0.5).unwrap();
        assert_eq!(a.to_json_bytes(), b.to_json_bytes());
        assert_ne!(a, gen_expression(8, 4, 10, 0.5).unwrap());
        assert_eq!(a.genes(), ["g000", "g001", "g002", "g003"]);
        assert_eq!(a.regions()[9], "r009");
    }

    #[test]
    fn generation_independent_of_exec() {
        let s = gen_expression_at(3, 11, 3 * CHUNK_ROWS + 17, 0.3, 5, Exec::Sequential).unwrap();
        let p = gen_expression_at(3, 11, 3 * CHUNK_ROWS + 17, 0.3, 5, Exec::Parallel).unwrap();
        assert_eq!(s, p);
        assert_eq!(s.regions()[0], "r005");
    }

    #[test]
    fn density_within_three_sigma() {
        // Binomial(n, p): mean n*p, sd sqrt(n*p*(1-p)).
        let (genes, regions, p) = (20usize, 5000usize, 0.95f64);
        let m = gen_expression(11, genes, regions, p).unwrap();
        let n = (genes * regions) as f64;
        let on = (0..regions).flat_map(|r| m.row(r)).filter(|b| *b).count() as f64;
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((on - n * p).abs() <= 3.0 * sd, "on={on} expected {} ± {}", n * p, 3.0 * sd);
    }

    #[test]
    fn tiny_and_invalid_parameters() {
        let m = gen_expression(1, 1, 1, 0.5).unwrap();
        assert_eq!((m.n_genes(), m.n_regions()), (1, 1));
        for (g, r, d) in [(0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.0), (1, 1, 1.0), (1, 1, f64::NAN)] {
            assert!(matches!(gen_expression(1, g, r, d), Err(WorkloadError::BadParams(_))));
        }
    }

    #[test]
    fn collate_three_parts() {
        let parts: Vec<_> =
            (0..3).map(|i| gen_expression_at(i, 4, 10, 0.5, i as usize * 10, Exec::default()).unwrap()).collect();
        let all = collate(&parts).unwrap();
        assert_eq!(all.n_regions(), 30);
        for (i, p) in parts.iter().enumerate() {
            for r in 0..10 {
                assert_eq!(all.regions()[i * 10 + r], p.regions()[r]);
                assert_eq!(all.row(i * 10 + r), p.row(r));
            }
        }
        assert_eq!(collate(&parts[..1]).unwrap(), parts[0]);
    }

    #[test]
    fn collate_errors() {
        let a = gen_expression(1, 4, 10, 0.5).unwrap();
        let b = gen_expression(1, 5, 10, 0.5).unwrap();
        assert_eq!(collate(&[a.clone(), b]), Err(WorkloadError::GeneMismatch));
        assert_eq!(collate(&[a.clone(), a.clone()]), Err(WorkloadError::DuplicateRegion("r000".into())));
        assert!(matches!(collate(&[]), Err(WorkloadError::BadParams(_))));
    }

    #[test]
    fn wire_form_round_trip_and_padding() {
        let m = ExpressionMatrix::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["r1".into(), "r2".into()],
            &[vec![true, false, true], vec![false, true, false]],
        )
        .unwrap();
        let json: serde_json::Value = serde_json::from_slice(&m.to_json_bytes()).unwrap();
        // 0b1010_0000, 0b0100_0000
        assert_eq!(json["cells"], B64.encode([0xA0u8, 0x40]));
        assert_eq!(ExpressionMatrix::from_json_bytes(&m.to_json_bytes()).unwrap(), m);

        let bad = br#"{"genes":["a"],"regions":["r1"],"cells":"/w=="}"#;
        assert!(matches!(ExpressionMatrix::from_json_bytes(bad), Err(WorkloadError::Malformed(_))));
        let dup = br#"{"genes":["a","a"],"regions":["r1"],"cells":"AA=="}"#;
        assert!(matches!(ExpressionMatrix::from_json_bytes(dup), Err(WorkloadError::Malformed(_))));
    }

    #[test]
    fn complement_flips_cells_only() {
        let m = gen_expression(5, 11, 40, 0.3).unwrap();
        let c = m.complement();
        for r in 0..40 {
            for g in 0..11 {
                assert_ne!(m.get(r, g), c.get(r, g));
            }
        }
        assert_eq!(c.complement(), m);
        ExpressionMatrix::from_json_bytes(&c.to_json_bytes()).unwrap();
    }
}
