//! `semtag` command line: `train`, `eval`, `tag` and `replicate`.
//!
//! Exit codes: 0 on success, 1 for data or model errors, 2 for usage errors.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::data::{load_context_embeddings, parse_corpus, EmbeddedSentence, Sentence};
use crate::error::{Error, Result};
use crate::model::EmbeddingMode;
use crate::optim::OptimizerKind;
use crate::trainer::{
    evaluate_with_tags, format_significant, parse_experiment_configs, run_experiment, CorpusPaths, EpochMetrics,
    ExperimentConfig, Tagger,
};

#[derive(Debug, Parser)]
#[command(name = "semtag", version, about = "LSTM-CRF semantic tagger")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write curves.csv, model.ckpt, vocab.txt and tags.txt
    Train(TrainArgs),
    /// Report token accuracy and loss of a trained model on a tagged corpus
    Eval(EvalArgs),
    /// Tag whitespace-tokenized sentences, one per input line
    Tag(TagArgs),
    /// Run the seven reference experiments
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Tagged training corpus (token<TAB>tag lines)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Held-out corpus; when absent the training corpus is split
    #[arg(long)]
    pub val_corpus: Option<PathBuf>,
    /// Fraction of the corpus held out for validation
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Contextual embedding file; switches to external-embedding mode
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub emb_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// adam or sgd
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    /// Base learning rate (decayed by 0.1 every 10 epochs)
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop tokens seen fewer times than this from the vocabulary
    #[arg(long)]
    pub min_freq: Option<usize>,
    /// Clip the global gradient norm of each batch
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Experiment file with [experiment N] sections
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Experiment id, from --config or the built-in reference grid
    #[arg(long)]
    pub experiment: Option<u32>,
    /// Output directory
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `train`
    #[arg(long, required_unless_present = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Gold corpus
    #[arg(long, required_unless_present = "embeddings")]
    pub corpus: Option<PathBuf>,
    /// Gold embedding file, for external-embedding models
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Score this tagged file against --corpus instead of running a model
    #[arg(long, requires = "corpus")]
    pub predictions: Option<PathBuf>,
    /// tag<TAB>meta-tag map for a meta-tag accuracy
    #[arg(long)]
    pub meta_tags: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    /// Directory written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Read sentences from this file instead of standard input
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Write tagged output here instead of standard output
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Tag the sentences of an embedding file (external-embedding models)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Experiment file overriding the built-in grid
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Only these experiment ids (repeatable)
    #[arg(long = "experiment")]
    pub experiments: Vec<u32>,
    /// Override the epoch count of every experiment
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "replication")]
    pub out: PathBuf,
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let rendered = err.render();
            let _ = if err.use_stderr() { write!(stderr, "{rendered}") } else { write!(stdout, "{rendered}") };
            return err.exit_code();
        }
    };
    if let Command::Train(args) = &cli.command {
        if let Some(err) = train_usage_error(args) {
            let _ = write!(stderr, "{}", err.render());
            return err.exit_code();
        }
    }
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args, stdout, stderr),
        Command::Eval(args) => cmd_eval(&args, stdout),
        Command::Tag(args) => cmd_tag(&args, stdin, stdout),
        Command::Replicate(args) => cmd_replicate(&args, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "error: {err}");
            1
        }
    }
}

fn progress(stderr: &mut dyn Write, id: u32) -> impl FnMut(&EpochMetrics) + '_ {
    move |m| {
        let _ = writeln!(
            stderr,
            "experiment {id} epoch {:>2}: lr {} train loss {} acc {} | val loss {} acc {}",
            m.epoch,
            format_significant(m.lr, 4),
            format_significant(m.train_loss, 5),
            format_significant(m.train_acc, 4),
            format_significant(m.val_loss, 5),
            format_significant(m.val_acc, 4),
        );
    }
}

fn resolve_config(
    config_file: Option<&Path>,
    experiment: Option<u32>,
    data: &DataArgs,
    hyper: &HyperArgs,
) -> Result<ExperimentConfig> {
    let mut config = match (config_file, experiment) {
        (Some(path), id) => {
            let configs = parse_experiment_configs(&fs::read_to_string(path)?)?;
            match id {
                Some(id) => configs
                    .get(&id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("{} has no [experiment {id}]", path.display())))?,
                None if configs.len() == 1 => configs.into_values().next().expect("one entry"),
                None => {
                    return Err(Error::Config(
                        "the config file has several experiments; pick one with --experiment".into(),
                    ))
                }
            }
        }
        (None, Some(id)) => ExperimentConfig::grid(id)?,
        (None, None) => ExperimentConfig::default(),
    };
    if data.embeddings.is_some() {
        config.embedding_mode = EmbeddingMode::External;
    }
    if let Some(v) = data.val_fraction {
        config.val_fraction = v;
    }
    if let Some(opt) = hyper.optimizer {
        if opt != config.optimizer && hyper.lr.is_none() {
            config.base_lr = opt.default_lr();
        }
        config.optimizer = opt;
    }
    let h = hyper;
    config.emb_dim = h.emb_dim.unwrap_or(config.emb_dim);
    config.hidden_dim = h.hidden_dim.unwrap_or(config.hidden_dim);
    config.base_lr = h.lr.unwrap_or(config.base_lr);
    config.batch_size = h.batch_size.unwrap_or(config.batch_size);
    config.epochs = h.epochs.unwrap_or(config.epochs);
    config.seed = h.seed.unwrap_or(config.seed);
    config.min_freq = h.min_freq.unwrap_or(config.min_freq);
    if h.clip_norm.is_some() {
        config.clip_norm = h.clip_norm;
    }
    config.validate()?;
    Ok(config)
}

fn corpus_paths(data: &DataArgs) -> CorpusPaths {
    CorpusPaths {
        corpus: data.corpus.clone(),
        val_corpus: data.val_corpus.clone(),
        embeddings: data.embeddings.clone(),
    }
}

/// Internal embeddings need a corpus; that is a usage error, not a data error.
fn train_usage_error(args: &TrainArgs) -> Option<clap::Error> {
    let config = resolve_config(args.config.as_deref(), args.experiment, &args.data, &args.hyper).ok()?;
    if config.embedding_mode != EmbeddingMode::Internal || args.data.corpus.is_some() {
        return None;
    }
    let mut cli = Cli::command();
    cli.build();
    let mut train = cli.find_subcommand_mut("train")?.clone().bin_name("semtag train");
    Some(train.error(ErrorKind::MissingRequiredArgument, "--corpus is required unless --embeddings is given"))
}

/// `train`
pub fn cmd_train(args: &TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let config = resolve_config(args.config.as_deref(), args.experiment, &args.data, &args.hyper)?;
    if config.embedding_mode == EmbeddingMode::Internal && args.data.corpus.is_none() {
        return Err(Error::Config("--corpus is required for internal embeddings".into()));
    }
    let run = run_experiment(&config, &corpus_paths(&args.data), &args.out, progress(stderr, config.id))?;
    let last = run.metrics.last().expect("at least one epoch");
    writeln!(
        stdout,
        "experiment {}: {} epochs, train acc {}, val acc {}; wrote {}",
        run.config.id,
        run.metrics.len(),
        format_significant(last.train_acc, 6),
        format_significant(last.val_acc, 6),
        args.out.display()
    )?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    parse_corpus(BufReader::new(File::open(path)?))
}

fn read_embeddings(path: &Path) -> Result<Vec<EmbeddedSentence>> {
    Ok(load_context_embeddings(BufReader::new(File::open(path)?))?.sentences)
}

/// Correct and total token counts of `predicted` against `gold`.
pub fn count_matches(gold: &[Sentence], predicted: &[Sentence]) -> Result<(usize, usize)> {
    if gold.len() != predicted.len() {
        return Err(Error::Format(format!("{} gold sentences but {} predicted", gold.len(), predicted.len())));
    }
    let (mut correct, mut total) = (0, 0);
    for (n, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.tokens != p.tokens {
            return Err(Error::Format(format!("sentence {} has different tokens", n + 1)));
        }
        correct += g.tags.iter().zip(&p.tags).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    Ok((correct, total))
}

/// `eval`
pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    if let Some(pred_path) = &args.predictions {
        let gold = read_corpus(args.corpus.as_deref().expect("clap requires --corpus"))?;
        let predicted = read_corpus(pred_path)?;
        let (correct, total) = count_matches(&gold, &predicted)?;
        writeln!(stdout, "accuracy\t{}", correct as f64 / total as f64)?;
        writeln!(stdout, "correct\t{correct}")?;
        writeln!(stdout, "tokens\t{total}")?;
        return Ok(());
    }

    let dir = args.checkpoint.as_deref().expect("clap requires --checkpoint");
    let (mut tagger, _) = Tagger::load(dir)?;
    if let Some(path) = &args.meta_tags {
        tagger.tags = tagger.tags.with_meta_tags(BufReader::new(File::open(path)?))?;
    }
    let corpus = match (tagger.model.mode(), &args.embeddings, &args.corpus) {
        (EmbeddingMode::External, Some(path), _) => tagger.encode_embedded(&read_embeddings(path)?)?,
        (EmbeddingMode::External, None, _) => return Err(Error::Config("this model needs --embeddings".into())),
        (EmbeddingMode::Internal, _, Some(path)) => tagger.encode_sentences(&read_corpus(path)?)?,
        (EmbeddingMode::Internal, _, None) => return Err(Error::Config("this model needs --corpus".into())),
    };
    let eval = evaluate_with_tags(&tagger.model, &corpus, &tagger.tags)?;
    writeln!(stdout, "accuracy\t{}", eval.accuracy)?;
    writeln!(stdout, "correct\t{}", eval.correct)?;
    writeln!(stdout, "tokens\t{}", eval.tokens)?;
    writeln!(stdout, "loss\t{}", eval.loss)?;
    writeln!(stdout, "token_loss\t{}", eval.token_loss)?;
    if let Some(meta) = eval.meta_accuracy {
        writeln!(stdout, "meta_accuracy\t{meta}")?;
    }
    Ok(())
}

/// `tag`
pub fn cmd_tag(args: &TagArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<()> {
    let (tagger, _) = Tagger::load(&args.checkpoint)?;
    let mut file_out;
    let out: &mut dyn Write = match &args.output {
        Some(path) => {
            file_out = BufWriter::new(File::create(path)?);
            &mut file_out
        }
        None => stdout,
    };

    if let Some(path) = &args.embeddings {
        for sentence in read_embeddings(path)? {
            let tags = tagger.tag_input(crate::encoder::TokenInput::Vectors(sentence.vectors.view()))?;
            write_block(out, &sentence.tokens, &tags)?;
        }
        out.flush()?;
        return Ok(());
    }

    let mut file_in;
    let input: &mut dyn BufRead = match &args.input {
        Some(path) => {
            file_in = BufReader::new(File::open(path)?);
            &mut file_in
        }
        None => stdin,
    };
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let tags = tagger.tag_tokens(&tokens)?;
        write_block(out, &tokens, &tags)?;
    }
    out.flush()?;
    Ok(())
}

fn write_block<S: AsRef<str>>(out: &mut dyn Write, tokens: &[S], tags: &[String]) -> Result<()> {
    for (token, tag) in tokens.iter().zip(tags) {
        writeln!(out, "{}\t{tag}", token.as_ref())?;
    }
    writeln!(out)?;
    Ok(())
}

/// `replicate`
pub fn cmd_replicate(args: &ReplicateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let mut configs = match &args.config {
        Some(path) => parse_experiment_configs(&fs::read_to_string(path)?)?.into_values().collect(),
        None => ExperimentConfig::grid_all(),
    };
    if !args.experiments.is_empty() {
        configs.retain(|c| args.experiments.contains(&c.id));
        if configs.is_empty() {
            return Err(Error::Config("no experiment matches --experiment".into()));
        }
    }
    fs::create_dir_all(&args.out)?;
    let mut summary = csv::Writer::from_path(args.out.join("summary.csv"))?;
    summary.write_record([
        "experiment",
        "optimizer",
        "epochs",
        "batch_size",
        "emb_dim",
        "hidden_dim",
        "train_acc",
        "val_acc",
    ])?;
    for mut config in configs {
        if let Some(epochs) = args.epochs {
            config.epochs = epochs;
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(v) = args.data.val_fraction {
            config.val_fraction = v;
        }
        config.validate()?;
        let available = match config.embedding_mode {
            EmbeddingMode::Internal => args.data.corpus.is_some(),
            EmbeddingMode::External => args.data.embeddings.is_some(),
        };
        if !available {
            writeln!(
                stderr,
                "skipping experiment {}: no {} input given",
                config.id,
                match config.embedding_mode {
                    EmbeddingMode::Internal => "--corpus",
                    EmbeddingMode::External => "--embeddings",
                }
            )?;
            continue;
        }
        let paths = match config.embedding_mode {
            EmbeddingMode::Internal => CorpusPaths { embeddings: None, ..corpus_paths(&args.data) },
            EmbeddingMode::External => {
                CorpusPaths { corpus: None, val_corpus: None, embeddings: args.data.embeddings.clone() }
            }
        };
        let dir = args.out.join(format!("experiment-{}", config.id));
        let run = run_experiment(&config, &paths, &dir, progress(stderr, config.id))?;
        let last = run.metrics.last().expect("at least one epoch");
        summary.write_record([
            run.config.id.to_string(),
            run.config.optimizer.to_string(),
            run.config.epochs.to_string(),
            run.config.batch_size.to_string(),
            run.config.emb_dim.to_string(),
            run.config.hidden_dim.to_string(),
            format_significant(last.train_acc, 6),
            format_significant(last.val_acc, 6),
        ])?;
        writeln!(
            stdout,
            "experiment {}: train acc {}, val acc {}",
            run.config.id,
            format_significant(last.train_acc, 6),
            format_significant(last.val_acc, 6)
        )?;
    }
    summary.flush()?;
    Ok(())
}
