use rayon::prelude::*;

use super::config::TrainConfig;
use super::trainer::{EpochSummary, Trainer};
use crate::decoding::{decode, DecodeOptions};
use crate::error::{Result, SrbError};
use crate::model::{ModelConfig, ModelParams};
use crate::rouge::{corpus_rouge, Aggregation, RougeReport, TABLE_HEADER};
use crate::text::{CorpusSplit, TokenId};

pub struct Evaluation {
    pub report: RougeReport,
    /// Decoded summary for every pair, in corpus order.
    pub outputs: Vec<Vec<TokenId>>,
}

/// Decodes every source and scores the outputs against the gold summaries.
pub fn evaluate(
    corpus: &CorpusSplit,
    params: &ModelParams,
    cfg: &ModelConfig,
    options: &DecodeOptions,
    aggregation: Aggregation,
) -> Result<Evaluation> {
    if corpus.is_empty() {
        return Err(SrbError::argument("evaluation corpus is empty"));
    }
    let outputs: Vec<Vec<TokenId>> = corpus
        .pairs
        .par_iter()
        .map(|p| decode(params, cfg, &p.source_ids, options))
        .collect::<Result<_>>()?;
    let scored: Vec<(&[TokenId], &[TokenId])> = outputs
        .iter()
        .zip(&corpus.pairs)
        .map(|(o, p)| (o.as_slice(), p.summary_ids.as_slice()))
        .collect();
    let report = corpus_rouge(&scored, aggregation)?;
    Ok(Evaluation { report, outputs })
}

/// One row of the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub label: &'static str,
    pub use_attention: bool,
    pub use_srb: bool,
    pub use_gate: bool,
}

/// Plain encoder-decoder, then attention, the relevance term and the input
/// gate added one at a time.
pub const ABLATION_VARIANTS: [Variant; 4] = [
    Variant {
        label: "plain",
        use_attention: false,
        use_srb: false,
        use_gate: false,
    },
    Variant {
        label: "+attention",
        use_attention: true,
        use_srb: false,
        use_gate: false,
    },
    Variant {
        label: "+attention+srb",
        use_attention: true,
        use_srb: true,
        use_gate: false,
    },
    Variant {
        label: "+attention+srb+gate",
        use_attention: true,
        use_srb: true,
        use_gate: true,
    },
];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: RougeReport,
    pub last_epoch: Option<EpochSummary>,
}

/// Trains each variant from the same seed and data with the same budget,
/// then evaluates all of them on `eval`.
pub fn ablate(
    train: &CorpusSplit,
    eval: &CorpusSplit,
    base: &ModelConfig,
    train_config: &TrainConfig,
    decode_options: &DecodeOptions,
    on_variant: &mut dyn FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(ABLATION_VARIANTS.len());
    for variant in ABLATION_VARIANTS {
        let cfg = ModelConfig {
            use_attention: variant.use_attention,
            use_srb: variant.use_srb,
            use_gate: variant.use_gate,
            ..base.clone()
        };
        let mut trainer = Trainer::new(cfg.clone(), train_config.clone())?;
        let summaries = trainer.fit(train, None, &mut |_| {}, &mut |_| {})?;
        let result = evaluate(eval, trainer.params(), &cfg, decode_options, Aggregation::Macro)?;
        let row = AblationRow {
            variant,
            report: result.report,
            last_epoch: summaries.last().copied(),
        };
        on_variant(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Tab-separated table with F-scores in percent.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.report.table_row(row.variant.label));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::text::{SplitRole, TextSummaryPair};

    #[test]
    fn gold_against_itself_is_perfect() {
        // Scoring path only: ROUGE of summaries against themselves.
        let pairs: Vec<(Vec<usize>, Vec<usize>)> =
            vec![(vec![4, 5, 6], vec![4, 5, 6]), (vec![7, 8], vec![7, 8])];
        let r = corpus_rouge(&pairs, Aggregation::Macro).unwrap();
        assert_eq!((r.rouge1.f, r.rouge2.f, r.rouge_l.f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn evaluate_rejects_empty() {
        let cfg = ModelConfig {
            vocab_size: 8,
            embed_dim: 2,
            hidden_dim: 3,
            gate_hidden_dim: 2,
            attn_dim: 2,
            ..Default::default()
        };
        let params = init_params(&cfg, 0).unwrap();
        let empty = CorpusSplit {
            role: SplitRole::Test,
            pairs: vec![],
        };
        assert!(evaluate(&empty, &params, &cfg, &DecodeOptions::default(), Aggregation::Macro).is_err());
        let one = CorpusSplit {
            role: SplitRole::Test,
            pairs: vec![TextSummaryPair {
                source_ids: vec![4, 5],
                summary_ids: vec![4],
                score: Some(4),
            }],
        };
        let e = evaluate(&one, &params, &cfg, &DecodeOptions { max_len: 3, ..Default::default() }, Aggregation::Macro).unwrap();
        assert_eq!(e.outputs.len(), 1);
        assert_eq!(e.report.pair_count, 1);
    }
}
