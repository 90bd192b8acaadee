use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use srb::decoding::{decode, DecodeOptions, DEFAULT_BEAM, DEFAULT_MAX_LEN};
use srb::model::ModelConfig;
use srb::rouge::{corpus_rouge, Aggregation, TABLE_HEADER};
use srb::text::{load_corpus, read_records, CorpusSplit, LoadOptions, SplitRole, Vocabulary};
use srb::train::{
    ablate, ablation_table, evaluate, parse_experiment_config, Checkpoint, TrainConfig, Trainer,
    MANIFEST_FILE,
};

#[derive(Parser)]
#[command(name = "srb", version, about = "Character-level abstractive summarizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints under --out.
    Train(TrainArgs),
    /// Summarize one source text per input line.
    Summarize(SummarizeArgs),
    /// Decode a test corpus and report ROUGE.
    Evaluate(EvaluateArgs),
    /// Train and compare the four model variants.
    Ablate(AblateArgs),
    /// Score candidate lines against reference lines.
    Rouge(RougeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Tab-separated `score<TAB>text<TAB>summary` lines.
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary file; built from the corpus and written here if missing.
    #[arg(long)]
    vocab: PathBuf,
    /// `key=value` model and training settings.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, default_value_t = DEFAULT_BEAM)]
    beam: usize,
    #[arg(long = "max-len", default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Rank finished beams by mean log-probability per token.
    #[arg(long)]
    length_normalize: bool,
}

impl DecodeArgs {
    fn options(&self) -> DecodeOptions {
        DecodeOptions {
            beam: self.beam,
            max_len: self.max_len,
            length_normalize: self.length_normalize,
        }
    }
}

#[derive(Args)]
struct SummarizeArgs {
    /// Checkpoint directory, or a training output directory holding `final`.
    #[arg(long)]
    ckpt: PathBuf,
    /// One source text per line; `-` reads standard input.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Minimum relevance score a pair needs to be scored.
    #[arg(long, default_value_t = 3)]
    min_score: u8,
    /// Score every pair regardless of relevance score.
    #[arg(long, conflicts_with = "min_score")]
    all: bool,
    #[command(flatten)]
    decode: DecodeArgs,
    /// Pool n-gram counts over the corpus instead of averaging per pair.
    #[arg(long)]
    micro: bool,
    /// Label for the table row.
    #[arg(long, default_value = "model")]
    label: String,
}

#[derive(Args)]
struct AblateArgs {
    /// Training corpus.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Evaluation corpus; without it the last tenth of --corpus is held out.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// `key=value` settings shared by all variants.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args)]
struct RougeArgs {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    references: PathBuf,
    #[arg(long)]
    micro: bool,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::Summarize(a) => summarize(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Rouge(a) => rouge_cmd(a),
    }
}

fn read_config(path: &Path) -> Result<(ModelConfig, TrainConfig)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_experiment_config(&text).with_context(|| format!("parsing {}", path.display()))
}

fn build_vocab(corpus: &Path, max_size: usize) -> Result<Vocabulary> {
    let records = read_records(corpus)?;
    let texts = records.iter().flat_map(|r| [r.text.as_str(), r.summary.as_str()]);
    Ok(Vocabulary::build(texts, max_size)?)
}

fn train_load_options(train: &TrainConfig) -> LoadOptions {
    LoadOptions {
        min_score: None,
        max_source_len: train.max_source_len,
        max_summary_len: train.max_summary_len,
    }
}

fn load(path: &Path, role: SplitRole, vocab: &Vocabulary, options: &LoadOptions) -> Result<CorpusSplit> {
    let (split, report) = load_corpus(path, role, vocab, options)
        .with_context(|| format!("loading {}", path.display()))?;
    info!(
        "{}: kept {}, dropped {} low-score, {} unscored, {} empty",
        path.display(),
        report.kept,
        report.dropped_low_score,
        report.dropped_missing_score,
        report.dropped_empty
    );
    Ok(split)
}

fn train(a: TrainArgs) -> Result<()> {
    let (mut model, mut config) = read_config(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let vocab = if a.vocab.exists() {
        Vocabulary::load(&a.vocab)?
    } else {
        let v = build_vocab(&a.corpus, model.vocab_size)?;
        v.save(&a.vocab)?;
        info!("wrote vocabulary of {} to {}", v.len(), a.vocab.display());
        v
    };
    if vocab.len() > model.vocab_size {
        bail!("vocabulary has {} entries but vocab_size is {}", vocab.len(), model.vocab_size);
    }
    model.vocab_size = vocab.len();
    let corpus = load(&a.corpus, SplitRole::Train, &vocab, &train_load_options(&config))?;

    let mut trainer = Trainer::new(model, config)?.with_vocab(vocab)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut write_err = None;
    trainer.fit(
        &corpus,
        Some(&a.out),
        &mut |r| {
            if let Err(e) = writeln!(out, "{}", r.to_tsv()) {
                write_err.get_or_insert(e);
            }
        },
        &mut |e| info!("epoch {}: loss {:.6} nll {:.6} cos {:.6}", e.epoch, e.loss, e.nll, e.cos),
    )?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    info!("final checkpoint in {}", a.out.join("final").display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, Vocabulary)> {
    let dir = if !path.join(MANIFEST_FILE).exists() && path.join("final").join(MANIFEST_FILE).exists() {
        path.join("final")
    } else {
        path.to_path_buf()
    };
    let mut ckpt = Checkpoint::load(&dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    let vocab = ckpt
        .vocab
        .take()
        .with_context(|| format!("checkpoint {} has no vocabulary", dir.display()))?;
    Ok((ckpt, vocab))
}

fn summarize(a: SummarizeArgs) -> Result<()> {
    let (ckpt, vocab) = load_checkpoint(&a.ckpt)?;
    let reader: Box<dyn BufRead> = if a.input.as_os_str() == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(BufReader::new(fs::File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?))
    };
    let options = a.decode.options();
    let mut out = BufWriter::new(io::stdout().lock());
    for line in reader.lines() {
        let line = line?;
        let ids = vocab.encode(line.trim_end_matches('\r'));
        let summary = if ids.is_empty() {
            String::new()
        } else {
            vocab.decode(&decode(&ckpt.params, &ckpt.model, &ids, &options)?)?
        };
        writeln!(out, "{summary}")?;
    }
    out.flush()?;
    Ok(())
}

fn aggregation(micro: bool) -> Aggregation {
    if micro {
        Aggregation::Micro
    } else {
        Aggregation::Macro
    }
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let (ckpt, vocab) = load_checkpoint(&a.ckpt)?;
    let options = LoadOptions {
        min_score: (!a.all).then_some(a.min_score),
        ..Default::default()
    };
    let corpus = load(&a.corpus, SplitRole::Test, &vocab, &options)?;
    let result = evaluate(&corpus, &ckpt.params, &ckpt.model, &a.decode.options(), aggregation(a.micro))?;
    println!("{TABLE_HEADER}");
    println!("{}", result.report.table_row(&a.label));
    println!("{}", result.report.to_kv_line());
    Ok(())
}

fn ablate_cmd(a: AblateArgs) -> Result<()> {
    let (model, config) = match &a.config {
        Some(path) => read_config(path)?,
        None => (ModelConfig::default(), TrainConfig::default()),
    };
    let vocab = build_vocab(&a.corpus, model.vocab_size)?;
    let model = ModelConfig {
        vocab_size: vocab.len(),
        ..model
    };
    let mut train = load(&a.corpus, SplitRole::Train, &vocab, &train_load_options(&config))?;
    let eval = match &a.eval {
        Some(path) => load(path, SplitRole::Test, &vocab, &LoadOptions::for_role(SplitRole::Test))?,
        None => {
            if train.len() < 2 {
                bail!("need at least two pairs to hold one out");
            }
            let held = train.len().div_ceil(10);
            let pairs = train.pairs.split_off(train.len() - held);
            CorpusSplit {
                role: SplitRole::Test,
                pairs,
            }
        }
    };
    info!("ablation: {} training pairs, {} evaluation pairs", train.len(), eval.len());

    fs::create_dir_all(&a.out)?;
    vocab.save(&a.out.join("vocab.tsv"))?;
    let rows = ablate(&train, &eval, &model, &config, &a.decode.options(), &mut |row| {
        info!("{}: {}", row.variant.label, row.report.to_kv_line())
    })?;
    let table = ablation_table(&rows);
    fs::write(a.out.join("ablation.tsv"), &table)?;
    let reports: String = rows
        .iter()
        .map(|r| format!("variant={} {}\n", r.variant.label, r.report.to_kv_line()))
        .collect();
    fs::write(a.out.join("reports.txt"), reports)?;
    print!("{table}");
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<Vec<char>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').chars().collect()).collect())
}

fn rouge_cmd(a: RougeArgs) -> Result<()> {
    let candidates = read_lines(&a.candidates)?;
    let references = read_lines(&a.references)?;
    if candidates.len() != references.len() {
        bail!(
            "{} candidate lines but {} reference lines",
            candidates.len(),
            references.len()
        );
    }
    let pairs: Vec<_> = candidates.into_iter().zip(references).collect();
    let report = corpus_rouge(&pairs, aggregation(a.micro))?;
    print!("{report}");
    println!("{}", report.to_kv_line());
    Ok(())
}
