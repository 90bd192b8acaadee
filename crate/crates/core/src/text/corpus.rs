//! Line-oriented text/summary corpus.
//!
//! One record per line: `score<TAB>text<TAB>summary`, where `score` is an
//! integer human relevance judgement in `1..=5` or empty. Blank lines are
//! ignored.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::vocab::{TokenId, Vocabulary};
use crate::error::{Result, SrbError};

pub const DEFAULT_MAX_SOURCE_LEN: usize = 150;
pub const DEFAULT_MAX_SUMMARY_LEN: usize = 30;

/// A parsed line, before filtering and encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub line: usize,
    pub score: Option<u8>,
    pub text: String,
    pub summary: String,
}

/// One encoded corpus record. Sequences carry no BOS/EOS markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextSummaryPair {
    pub source_ids: Vec<TokenId>,
    pub summary_ids: Vec<TokenId>,
    pub score: Option<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplit {
    pub role: SplitRole,
    pub pairs: Vec<TextSummaryPair>,
}

impl CorpusSplit {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// Records scoring below this are dropped, as are unscored records.
    pub min_score: Option<u8>,
    pub max_source_len: usize,
    pub max_summary_len: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            min_score: None,
            max_source_len: DEFAULT_MAX_SOURCE_LEN,
            max_summary_len: DEFAULT_MAX_SUMMARY_LEN,
        }
    }
}

impl LoadOptions {
    /// Development and test splits keep only pairs judged relevant (score ≥ 3).
    pub fn for_role(role: SplitRole) -> Self {
        let min_score = match role {
            SplitRole::Train => None,
            SplitRole::Dev | SplitRole::Test => Some(3),
        };
        LoadOptions {
            min_score,
            ..Default::default()
        }
    }
}

/// Counts of what filtering did to a file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub kept: usize,
    pub dropped_low_score: usize,
    pub dropped_missing_score: usize,
    pub dropped_empty: usize,
}

pub fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    let file = fs::File::open(path)?;
    parse_records(BufReader::new(file), path)
}

/// Parses corpus lines. `origin` only labels errors.
pub fn parse_records(reader: impl BufRead, origin: &Path) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| SrbError::Parse {
            path: origin.to_path_buf(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [score, text, summary] = fields[..] else {
            return Err(err(format!(
                "expected 3 tab-separated fields (score, text, summary), found {}",
                fields.len()
            )));
        };
        let score = match score.trim() {
            "" => None,
            s => {
                let v: u8 = s.parse().map_err(|_| err(format!("score {s:?} is not an integer")))?;
                if !(1..=5).contains(&v) {
                    return Err(err(format!("score {v} outside 1..=5")));
                }
                Some(v)
            }
        };
        out.push(RawRecord {
            line: lineno,
            score,
            text: text.to_string(),
            summary: summary.to_string(),
        });
    }
    Ok(out)
}

impl CorpusSplit {
    /// Filters, truncates and encodes records, preserving their order.
    pub fn from_records(
        records: &[RawRecord],
        role: SplitRole,
        vocab: &Vocabulary,
        options: &LoadOptions,
    ) -> (Self, LoadReport) {
        let mut report = LoadReport::default();
        let mut pairs = Vec::with_capacity(records.len());
        for rec in records {
            if let Some(min) = options.min_score {
                match rec.score {
                    None => {
                        report.dropped_missing_score += 1;
                        continue;
                    }
                    Some(s) if s < min => {
                        report.dropped_low_score += 1;
                        continue;
                    }
                    Some(_) => {}
                }
            }
            let mut source_ids = vocab.encode(&rec.text);
            let mut summary_ids = vocab.encode(&rec.summary);
            if source_ids.is_empty() || summary_ids.is_empty() {
                report.dropped_empty += 1;
                continue;
            }
            source_ids.truncate(options.max_source_len);
            summary_ids.truncate(options.max_summary_len);
            pairs.push(TextSummaryPair {
                source_ids,
                summary_ids,
                score: rec.score,
            });
        }
        report.kept = pairs.len();
        if report.dropped_missing_score > 0 {
            log::warn!(
                "{} unscored records dropped by the score filter",
                report.dropped_missing_score
            );
        }
        (CorpusSplit { role, pairs }, report)
    }
}

/// Reads, filters and encodes a corpus file.
pub fn load_corpus(
    path: &Path,
    role: SplitRole,
    vocab: &Vocabulary,
    options: &LoadOptions,
) -> Result<(CorpusSplit, LoadReport)> {
    let records = read_records(path)?;
    Ok(CorpusSplit::from_records(&records, role, vocab, options))
}
