//! ROUGE-1, ROUGE-2 and ROUGE-L over token (character) sequences.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use crate::error::{Result, SrbError};
use crate::kv;

/// Precision, recall and balanced F-score.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f,
        }
    }

    fn from_counts(c: OverlapCounts) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Prf::from_pr(ratio(c.overlap, c.candidate), ratio(c.overlap, c.reference))
    }
}

/// Raw counts behind one score: matched units and the totals they are divided by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OverlapCounts {
    pub overlap: usize,
    pub candidate: usize,
    pub reference: usize,
}

impl std::ops::AddAssign for OverlapCounts {
    fn add_assign(&mut self, o: Self) {
        self.overlap += o.overlap;
        self.candidate += o.candidate;
        self.reference += o.reference;
    }
}

fn ngram_counts<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut out = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

pub fn rouge_n_counts<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Result<OverlapCounts> {
    if n < 1 {
        return Err(SrbError::argument("ROUGE-N needs n >= 1"));
    }
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| refs.get(g).map_or(0, |&r| c.min(r)))
        .sum();
    Ok(OverlapCounts {
        overlap,
        candidate: candidate.len().saturating_sub(n - 1),
        reference: reference.len().saturating_sub(n - 1),
    })
}

/// Clipped n-gram overlap.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Result<Prf> {
    Ok(Prf::from_counts(rouge_n_counts(candidate, reference, n)?))
}

/// Longest common subsequence length, `O(|a|·|b|)` time and `O(|b|)` space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_counts<T: PartialEq>(candidate: &[T], reference: &[T]) -> OverlapCounts {
    OverlapCounts {
        overlap: lcs_len(candidate, reference),
        candidate: candidate.len(),
        reference: reference.len(),
    }
}

/// LCS-based score with β = 1.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(rouge_l_counts(candidate, reference))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    /// Mean of per-pair scores.
    #[default]
    Macro,
    /// Scores from counts pooled over all pairs.
    Micro,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RougeReport {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
    pub pair_count: usize,
}

/// Per-pair scores for ROUGE-1, ROUGE-2 and ROUGE-L.
pub fn pair_counts<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> [OverlapCounts; 3] {
    [
        rouge_n_counts(candidate, reference, 1).expect("n = 1"),
        rouge_n_counts(candidate, reference, 2).expect("n = 2"),
        rouge_l_counts(candidate, reference),
    ]
}

pub fn corpus_rouge<T, C, R>(pairs: &[(C, R)], aggregation: Aggregation) -> Result<RougeReport>
where
    T: Eq + Hash,
    C: AsRef<[T]>,
    R: AsRef<[T]>,
{
    if pairs.is_empty() {
        return Err(SrbError::argument("ROUGE over an empty corpus"));
    }
    let counts: Vec<[OverlapCounts; 3]> = pairs
        .iter()
        .map(|(c, r)| pair_counts(c.as_ref(), r.as_ref()))
        .collect();
    let metric = |k: usize| match aggregation {
        Aggregation::Macro => {
            let n = counts.len() as f64;
            let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
            for c in &counts {
                let s = Prf::from_counts(c[k]);
                p += s.precision;
                r += s.recall;
                f += s.f;
            }
            Prf {
                precision: p / n,
                recall: r / n,
                f: f / n,
            }
        }
        Aggregation::Micro => {
            let mut total = OverlapCounts::default();
            for c in &counts {
                total += c[k];
            }
            Prf::from_counts(total)
        }
    };
    Ok(RougeReport {
        rouge1: metric(0),
        rouge2: metric(1),
        rouge_l: metric(2),
        pair_count: pairs.len(),
    })
}

impl RougeReport {
    fn metrics(&self) -> [(&'static str, Prf); 3] {
        [
            ("rouge1", self.rouge1),
            ("rouge2", self.rouge2),
            ("rougeL", self.rouge_l),
        ]
    }

    /// One line of `key=value` tokens; values round-trip exactly.
    pub fn to_kv_line(&self) -> String {
        let mut parts = Vec::new();
        for (name, m) in self.metrics() {
            parts.push(format!("{name}_f={:?}", m.f));
        }
        for (name, m) in self.metrics() {
            parts.push(format!("{name}_p={:?}", m.precision));
            parts.push(format!("{name}_r={:?}", m.recall));
        }
        parts.push(format!("pairs={}", self.pair_count));
        parts.join(" ")
    }

    pub fn parse_kv_line(line: &str) -> Result<Self> {
        let map = kv::parse_inline(line)?;
        let get = |key: &str| -> Result<f64> {
            let raw = map
                .get(key)
                .ok_or_else(|| SrbError::argument(format!("report is missing {key}")))?;
            kv::value(key, raw)
        };
        let prf = |name: &str| -> Result<Prf> {
            Ok(Prf {
                precision: get(&format!("{name}_p"))?,
                recall: get(&format!("{name}_r"))?,
                f: get(&format!("{name}_f"))?,
            })
        };
        let pair_count = map
            .get("pairs")
            .ok_or_else(|| SrbError::argument("report is missing pairs"))
            .and_then(|raw| kv::value("pairs", raw))?;
        Ok(RougeReport {
            rouge1: prf("rouge1")?,
            rouge2: prf("rouge2")?,
            rouge_l: prf("rougeL")?,
            pair_count,
        })
    }

    /// F-scores as percentages in a tab-separated row.
    pub fn table_row(&self, label: &str) -> String {
        format!(
            "{label}\t{:.1}\t{:.1}\t{:.1}",
            self.rouge1.f * 100.0,
            self.rouge2.f * 100.0,
            self.rouge_l.f * 100.0
        )
    }
}

pub const TABLE_HEADER: &str = "Model\tROUGE-1\tROUGE-2\tROUGE-L";

impl fmt::Display for RougeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric\tprecision\trecall\tf")?;
        for (name, m) in self.metrics() {
            writeln!(f, "{name}\t{:.4}\t{:.4}\t{:.4}", m.precision, m.recall, m.f)?;
        }
        Ok(())
    }
}
