use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use crate::error::{Result, SrbError};
use crate::model::{check_params, init_params, loss_and_gradients, LossValues, ModelConfig, ModelParams};
use crate::text::{CorpusSplit, TextSummaryPair, Vocabulary};

/// Batch means of the loss terms, logged once per optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainLogRecord {
    pub step: u64,
    pub loss: f64,
    pub nll: f64,
    pub cos: f64,
    /// Wall-clock seconds since the trainer was created.
    pub seconds: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

impl TrainLogRecord {
    /// `step nll cos loss seconds`, tab-separated.
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
            self.step, self.nll, self.cos, self.loss, self.seconds
        )
    }
}

/// Example-weighted means over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub nll: f64,
    pub cos: f64,
}

pub struct Trainer {
    model: ModelConfig,
    config: TrainConfig,
    params: ModelParams,
    optimizer: AdamState,
    epoch: usize,
    started: Instant,
    vocab: Option<Vocabulary>,
}

impl Trainer {
    pub fn new(model: ModelConfig, config: TrainConfig) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        let params = init_params(&model, config.seed)?;
        let optimizer = AdamState::new(&params);
        Ok(Trainer {
            model,
            config,
            params,
            optimizer,
            epoch: 0,
            started: Instant::now(),
            vocab: None,
        })
    }

    /// Continues from a saved checkpoint. A checkpoint without optimizer
    /// state starts fresh moments.
    pub fn resume(checkpoint: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        check_params(&checkpoint.params, &checkpoint.model)?;
        let optimizer = checkpoint
            .optimizer
            .unwrap_or_else(|| AdamState::new(&checkpoint.params));
        optimizer.m.check_same_layout(&checkpoint.params)?;
        Ok(Trainer {
            model: checkpoint.model,
            config,
            params: checkpoint.params,
            optimizer,
            epoch: checkpoint.epoch,
            started: Instant::now(),
            vocab: checkpoint.vocab,
        })
    }

    pub fn with_vocab(mut self, vocab: Vocabulary) -> Result<Self> {
        if vocab.len() > self.model.vocab_size {
            return Err(SrbError::consistency(format!(
                "vocabulary of {} does not fit model vocab_size {}",
                vocab.len(),
                self.model.vocab_size
            )));
        }
        self.vocab = Some(vocab);
        Ok(self)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            params: self.params.clone(),
            optimizer: Some(self.optimizer.clone()),
            epoch: self.epoch,
            vocab: self.vocab.clone(),
        }
    }

    fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.config.learning_rate,
            beta1: self.config.beta1,
            beta2: self.config.beta2,
            epsilon: self.config.epsilon,
        }
    }

    /// Rejects corpora with ids the model cannot embed.
    pub fn check_corpus(&self, corpus: &CorpusSplit) -> Result<()> {
        if corpus.is_empty() {
            return Err(SrbError::argument("training corpus is empty"));
        }
        let limit = self.model.vocab_size;
        for (i, p) in corpus.pairs.iter().enumerate() {
            if p.source_ids.is_empty() || p.summary_ids.is_empty() {
                return Err(SrbError::consistency(format!("pair {i} has an empty sequence")));
            }
            if let Some(&bad) = p.source_ids.iter().chain(&p.summary_ids).find(|&&id| id >= limit) {
                return Err(SrbError::consistency(format!(
                    "pair {i} uses token id {bad} but the model vocabulary has {limit} entries"
                )));
            }
        }
        Ok(())
    }

    /// One optimizer step on the mean loss of `batch`.
    pub fn train_step(&mut self, batch: &[&TextSummaryPair]) -> Result<TrainLogRecord> {
        if batch.is_empty() {
            return Err(SrbError::argument("empty batch"));
        }
        let results: Vec<Result<(LossValues, ModelParams)>> = batch
            .par_iter()
            .map(|pair| loss_and_gradients(&self.params, &self.model, pair))
            .collect();

        // Merge in example order so the sum is identical on every run.
        let mut grads = self.params.zeros_like();
        let (mut loss, mut nll, mut cos) = (0.0, 0.0, 0.0);
        for r in results {
            let (values, g) = r?;
            grads.add_assign(&g)?;
            loss += values.loss;
            nll += values.nll;
            cos += values.cos;
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        let grad_norm = clip_global_norm(&mut grads, self.config.clip_norm);
        let adam = self.adam_config();
        adam_step(&mut self.params, &grads, &mut self.optimizer, &adam)?;
        Ok(TrainLogRecord {
            step: self.optimizer.step,
            loss: loss / n,
            nll: nll / n,
            cos: cos / n,
            seconds: self.started.elapsed().as_secs_f64(),
            grad_norm,
        })
    }

    /// Order in which the next epoch visits the corpus. Depends only on the
    /// seed and the epoch number.
    pub fn epoch_order(&self, len: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64 + 1);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn train_epoch(
        &mut self,
        corpus: &CorpusSplit,
        log: &mut dyn FnMut(&TrainLogRecord),
    ) -> Result<EpochSummary> {
        self.check_corpus(corpus)?;
        let order = self.epoch_order(corpus.len());
        let (mut loss, mut nll, mut cos) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&TextSummaryPair> = chunk.iter().map(|&i| &corpus.pairs[i]).collect();
            let record = self.train_step(&batch)?;
            let k = batch.len() as f64;
            loss += record.loss * k;
            nll += record.nll * k;
            cos += record.cos * k;
            log(&record);
        }
        self.epoch += 1;
        let n = corpus.len() as f64;
        Ok(EpochSummary {
            epoch: self.epoch,
            loss: loss / n,
            nll: nll / n,
            cos: cos / n,
        })
    }

    /// Trains until `config.epochs` epochs are complete. With `out_dir`,
    /// writes `epoch-NNNN` checkpoints on the configured interval and `final`
    /// at the end.
    pub fn fit(
        &mut self,
        corpus: &CorpusSplit,
        out_dir: Option<&Path>,
        log: &mut dyn FnMut(&TrainLogRecord),
        on_epoch: &mut dyn FnMut(&EpochSummary),
    ) -> Result<Vec<EpochSummary>> {
        self.check_corpus(corpus)?;
        let mut summaries = Vec::new();
        while self.epoch < self.config.epochs {
            let summary = self.train_epoch(corpus, log)?;
            on_epoch(&summary);
            summaries.push(summary);
            if let Some(dir) = out_dir {
                let every = self.config.checkpoint_interval;
                if every > 0 && self.epoch.is_multiple_of(every) {
                    self.checkpoint().save(&dir.join(format!("epoch-{:04}", self.epoch)))?;
                }
            }
        }
        if let Some(dir) = out_dir {
            self.checkpoint().save(&dir.join("final"))?;
        }
        Ok(summaries)
    }
}
