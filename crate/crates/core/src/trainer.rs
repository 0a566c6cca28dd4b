//! Training loop, evaluation, experiment configurations and curve export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Metadata};
use crate::crf::CrfGradients;
use crate::data::{encode, load_context_embeddings, parse_corpus, split, EmbeddedSentence, Sentence, TagSet, Vocab};
use crate::encoder::{EncoderGradients, TokenInput};
use crate::error::{Error, Result};
use crate::model::{EmbeddingMode, Model};
use crate::optim::{clip_grad_norm, LrSchedule, OptimState, OptimizerKind};

/// Header of the curves CSV.
pub const CURVES_HEADER: [&str; 6] = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"];

/// Encoder input for one stored sentence.
#[derive(Debug, Clone, PartialEq)]
pub enum SentenceInput {
    Ids(Vec<usize>),
    /// `T x D`
    Vectors(Array2<f64>),
}

/// A sentence mapped onto a model's vocabulary and tag set.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence {
    pub input: SentenceInput,
    pub tags: Vec<usize>,
}

impl EncodedSentence {
    pub fn input(&self) -> TokenInput<'_> {
        match &self.input {
            SentenceInput::Ids(ids) => TokenInput::Ids(ids),
            SentenceInput::Vectors(v) => TokenInput::Vectors(v.view()),
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Encoded train and validation sets plus the inventories they were encoded with.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocab,
    pub tags: TagSet,
    pub mode: EmbeddingMode,
    /// LSTM input width in external mode; `None` for the internal table.
    pub input_dim: Option<usize>,
    pub train: Vec<EncodedSentence>,
    pub val: Vec<EncodedSentence>,
}

impl Dataset {
    /// Vocabulary from the training sentences, tag set from train and validation.
    pub fn internal(train: &[Sentence], val: &[Sentence], min_freq: usize) -> Result<Self> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vocab = Vocab::build(train, min_freq);
        let tags = TagSet::build(train.iter().chain(val));
        let encode_all = |sentences: &[Sentence]| -> Result<Vec<EncodedSentence>> {
            sentences
                .iter()
                .map(|s| {
                    let (ids, tag_ids) = encode(s, &vocab, &tags)?;
                    Ok(EncodedSentence { input: SentenceInput::Ids(ids), tags: tag_ids })
                })
                .collect()
        };
        Ok(Self {
            train: encode_all(train)?,
            val: encode_all(val)?,
            vocab,
            tags,
            mode: EmbeddingMode::Internal,
            input_dim: None,
        })
    }

    /// Sentences carrying their own input vectors.
    pub fn external(train: &[EmbeddedSentence], val: &[EmbeddedSentence]) -> Result<Self> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let dim = train[0].dim();
        if let Some(bad) = train.iter().chain(val).find(|s| s.dim() != dim) {
            return Err(Error::Format(format!("embedding dimension {} differs from {dim}", bad.dim())));
        }
        let plain: Vec<Sentence> = train.iter().map(EmbeddedSentence::sentence).collect();
        let vocab = Vocab::build(&plain, 1);
        let tags = TagSet::build(train.iter().chain(val).map(EmbeddedSentence::sentence).collect::<Vec<_>>().iter());
        let encode_all = |sentences: &[EmbeddedSentence]| -> Result<Vec<EncodedSentence>> {
            sentences
                .iter()
                .map(|s| {
                    if s.is_empty() {
                        return Err(Error::EmptySentence);
                    }
                    let tag_ids = s.tags.iter().map(|t| tags.id(t)).collect::<Result<_>>()?;
                    Ok(EncodedSentence { input: SentenceInput::Vectors(s.vectors.clone()), tags: tag_ids })
                })
                .collect()
        };
        Ok(Self {
            train: encode_all(train)?,
            val: encode_all(val)?,
            vocab,
            tags,
            mode: EmbeddingMode::External,
            input_dim: Some(dim),
        })
    }
}

/// One training run's settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: u32,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub embedding_mode: EmbeddingMode,
    pub base_lr: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub min_freq: usize,
    pub clip_norm: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: 1,
            optimizer: OptimizerKind::Adam,
            epochs: 20,
            batch_size: 5,
            emb_dim: 50,
            hidden_dim: 8,
            embedding_mode: EmbeddingMode::Internal,
            base_lr: OptimizerKind::Adam.default_lr(),
            seed: 1,
            val_fraction: 0.1,
            min_freq: 1,
            clip_norm: None,
        }
    }
}

/// `(id, optimizer, epochs, batch size, embedding dim, hidden dim)` of the seven
/// reference experiments; the last one reads 768-dim contextual vectors.
const GRID: [(u32, OptimizerKind, usize, usize, usize, usize); 7] = [
    (1, OptimizerKind::Adam, 20, 5, 50, 8),
    (2, OptimizerKind::Adam, 20, 5, 100, 20),
    (3, OptimizerKind::Sgd, 20, 5, 100, 20),
    (4, OptimizerKind::Adam, 20, 20, 100, 20),
    (5, OptimizerKind::Adam, 20, 5, 100, 30),
    (6, OptimizerKind::Adam, 20, 5, 100, 50),
    (7, OptimizerKind::Sgd, 20, 5, 768, 600),
];

impl ExperimentConfig {
    /// One of the seven reference experiments (ids 1 to 7).
    pub fn grid(id: u32) -> Result<Self> {
        let &(id, optimizer, epochs, batch_size, emb_dim, hidden_dim) = GRID
            .iter()
            .find(|row| row.0 == id)
            .ok_or_else(|| Error::Config(format!("no reference experiment {id}")))?;
        Ok(Self {
            id,
            optimizer,
            epochs,
            batch_size,
            emb_dim,
            hidden_dim,
            embedding_mode: if id == 7 { EmbeddingMode::External } else { EmbeddingMode::Internal },
            base_lr: optimizer.default_lr(),
            ..Self::default()
        })
    }

    pub fn grid_all() -> Vec<Self> {
        GRID.iter().map(|row| Self::grid(row.0).expect("grid row")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("emb_dim", self.emb_dim),
            ("hidden_dim", self.hidden_dim),
            ("min_freq", self.min_freq),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must be in (0, 1), got {}", self.val_fraction)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// `key = value` lines under an `[experiment N]` header.
    pub fn to_section(&self) -> String {
        let mut s = format!("[experiment {}]\n", self.id);
        let _ = writeln!(s, "optimizer = {}", self.optimizer);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "emb_dim = {}", self.emb_dim);
        let _ = writeln!(s, "hidden_dim = {}", self.hidden_dim);
        let _ = writeln!(s, "embedding_mode = {}", self.embedding_mode);
        let _ = writeln!(s, "base_lr = {}", self.base_lr);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "val_fraction = {}", self.val_fraction);
        let _ = writeln!(s, "min_freq = {}", self.min_freq);
        if let Some(c) = self.clip_norm {
            let _ = writeln!(s, "clip_norm = {c}");
        }
        s
    }

    fn metadata(&self) -> Metadata {
        let mut meta = Metadata::new();
        for line in self.to_section().lines().skip(1) {
            if let Some((k, v)) = line.split_once(" = ") {
                meta.insert(k.to_string(), v.to_string());
            }
        }
        meta.insert("experiment".into(), self.id.to_string());
        meta
    }
}

/// Parses experiment sections.
///
/// ```text
/// [experiment 3]
/// optimizer = sgd
/// hidden_dim = 20
/// ```
///
/// Unset keys keep the defaults of [`ExperimentConfig::default`], except that
/// `base_lr` defaults to the chosen optimizer's rate. `#` starts a comment line.
pub fn parse_experiment_configs(text: &str) -> Result<BTreeMap<u32, ExperimentConfig>> {
    let mut configs = BTreeMap::new();
    let mut current: Option<(ExperimentConfig, bool)> = None;

    fn finish(configs: &mut BTreeMap<u32, ExperimentConfig>, current: Option<(ExperimentConfig, bool)>) -> Result<()> {
        if let Some((mut config, lr_set)) = current {
            if !lr_set {
                config.base_lr = config.optimizer.default_lr();
            }
            config.validate()?;
            if configs.insert(config.id, config.clone()).is_some() {
                return Err(Error::Config(format!("experiment {} defined twice", config.id)));
            }
        }
        Ok(())
    }

    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let id = header
                .trim()
                .strip_prefix("experiment")
                .and_then(|rest| rest.trim().parse::<u32>().ok())
                .ok_or_else(|| Error::parse(n, format!("expected [experiment N], got {line:?}")))?;
            finish(&mut configs, current.take())?;
            current = Some((ExperimentConfig { id, ..ExperimentConfig::default() }, false));
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::parse(n, format!("expected key = value, got {line:?}")))?;
        let (config, lr_set) =
            current.as_mut().ok_or_else(|| Error::parse(n, "setting outside an [experiment N] section"))?;
        let bad = |what: &str| Error::parse(n, format!("invalid {what} {value:?}"));
        match key {
            "optimizer" => config.optimizer = value.parse().map_err(|_| bad(key))?,
            "epochs" => config.epochs = value.parse().map_err(|_| bad(key))?,
            "batch_size" => config.batch_size = value.parse().map_err(|_| bad(key))?,
            "emb_dim" => config.emb_dim = value.parse().map_err(|_| bad(key))?,
            "hidden_dim" => config.hidden_dim = value.parse().map_err(|_| bad(key))?,
            "embedding_mode" => config.embedding_mode = value.parse().map_err(|_| bad(key))?,
            "base_lr" | "lr" => {
                config.base_lr = value.parse().map_err(|_| bad(key))?;
                *lr_set = true;
            }
            "seed" => config.seed = value.parse().map_err(|_| bad(key))?,
            "val_fraction" => config.val_fraction = value.parse().map_err(|_| bad(key))?,
            "min_freq" => config.min_freq = value.parse().map_err(|_| bad(key))?,
            "clip_norm" => config.clip_norm = Some(value.parse().map_err(|_| bad(key))?),
            other => return Err(Error::parse(n, format!("unknown key {other:?}"))),
        }
    }
    finish(&mut configs, current)?;
    if configs.is_empty() {
        return Err(Error::Config("no [experiment N] sections".into()));
    }
    Ok(configs)
}

/// End-of-epoch measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sentence negative log-likelihood.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

/// Corpus-level scores of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Mean per-sentence negative log-likelihood.
    pub loss: f64,
    /// Correct tokens over all tokens.
    pub accuracy: f64,
    /// Summed negative log-likelihood over the token count.
    pub token_loss: f64,
    pub correct: usize,
    pub tokens: usize,
    /// Accuracy after mapping tags to meta-tags, when the tag set has them.
    pub meta_accuracy: Option<f64>,
}

/// Loss of one sentence and the gradients of every parameter.
pub fn sentence_loss_and_grads(
    model: &Model,
    sentence: &EncodedSentence,
) -> Result<(f64, EncoderGradients, CrfGradients)> {
    let (emissions, tape) = model.emissions(sentence.input())?;
    let (loss, crf_grads) = model.crf.nll_loss_and_grad(&emissions, &sentence.tags)?;
    let encoder_grads = model.encoder.backward(&tape, &crf_grads.d_emissions)?;
    Ok((loss, encoder_grads, crf_grads))
}

/// Viterbi predictions for every sentence.
pub fn predict_all(model: &Model, corpus: &[EncodedSentence]) -> Result<Vec<Vec<usize>>> {
    corpus.iter().map(|s| model.predict(s.input())).collect()
}

/// Token accuracy and mean loss. Does not touch the parameters.
pub fn evaluate(model: &Model, corpus: &[EncodedSentence]) -> Result<Evaluation> {
    evaluate_inner(model, corpus, None)
}

/// Like [`evaluate`], adding the meta-tag accuracy when `tags` carries a meta-tag map.
pub fn evaluate_with_tags(model: &Model, corpus: &[EncodedSentence], tags: &TagSet) -> Result<Evaluation> {
    evaluate_inner(model, corpus, Some(tags).filter(|t| t.has_meta_tags()))
}

fn evaluate_inner(model: &Model, corpus: &[EncodedSentence], tags: Option<&TagSet>) -> Result<Evaluation> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (mut loss_sum, mut correct, mut meta_correct, mut tokens) = (0.0, 0, 0, 0);
    for sentence in corpus {
        let (emissions, _) = model.emissions(sentence.input())?;
        loss_sum += model.crf.nll_loss(&emissions, &sentence.tags)?;
        let (path, _) = model.crf.viterbi_decode(&emissions)?;
        for (&pred, &gold) in path.iter().zip(&sentence.tags) {
            correct += usize::from(pred == gold);
            if let Some(tags) = tags {
                meta_correct += usize::from(tags.meta_tag(pred) == tags.meta_tag(gold));
            }
        }
        tokens += sentence.len();
    }
    Ok(Evaluation {
        loss: loss_sum / corpus.len() as f64,
        accuracy: correct as f64 / tokens as f64,
        token_loss: loss_sum / tokens as f64,
        correct,
        tokens,
        meta_accuracy: tags.map(|_| meta_correct as f64 / tokens as f64),
    })
}

/// Order in which an epoch visits the training sentences.
pub fn epoch_order(num_sentences: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..num_sentences).collect();
    order.shuffle(&mut rng);
    order
}

/// One pass over the training set: seeded shuffle, per-batch averaged
/// gradients, one optimizer step per batch (the last batch may be short).
/// Metrics are measured on the full sets after the pass.
pub fn train_epoch(
    model: &mut Model,
    optimizer: &mut OptimState,
    data: &Dataset,
    config: &ExperimentConfig,
    epoch: usize,
) -> Result<EpochMetrics> {
    if data.train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let lr = LrSchedule::step_decay(config.base_lr)?.lr_at(epoch as i64)?;
    let order = epoch_order(data.train.len(), config.seed, epoch);
    for batch in order.chunks(config.batch_size) {
        let mut grads = model.zero_grads();
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let (_, encoder_grads, crf_grads) = sentence_loss_and_grads(model, &data.train[i])?;
            grads.add_scaled(&encoder_grads, &crf_grads, scale);
        }
        if let Some(max_norm) = config.clip_norm {
            clip_grad_norm(&mut grads, max_norm);
        }
        optimizer.step(model, &grads, lr)?;
    }
    let train = evaluate(model, &data.train)?;
    let val = evaluate(model, &data.val)?;
    Ok(EpochMetrics {
        epoch,
        train_loss: train.loss,
        train_acc: train.accuracy,
        val_loss: val.loss,
        val_acc: val.accuracy,
        lr,
    })
}

/// Builds a model for `data` as `config` describes.
pub fn init_model(config: &ExperimentConfig, data: &Dataset) -> Result<Model> {
    let input_dim = data.input_dim.unwrap_or(config.emb_dim);
    Model::init(data.mode, data.vocab.len(), input_dim, config.hidden_dim, data.tags.len(), config.seed)
}

/// Initializes a model from the seed and trains it for `config.epochs` epochs.
pub fn train(
    config: &ExperimentConfig,
    data: &Dataset,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(Model, Vec<EpochMetrics>)> {
    config.validate()?;
    if config.embedding_mode != data.mode {
        return Err(Error::Config(format!(
            "experiment wants {} embeddings but the data is {}",
            config.embedding_mode, data.mode
        )));
    }
    let mut model = init_model(config, data)?;
    let mut optimizer = OptimState::new(config.optimizer, &model);
    let mut metrics = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let m = train_epoch(&mut model, &mut optimizer, data, config, epoch)?;
        on_epoch(&m);
        metrics.push(m);
    }
    Ok((model, metrics))
}

/// Input files for [`run_experiment`].
#[derive(Debug, Clone, Default)]
pub struct CorpusPaths {
    /// Tagged corpus (internal mode). In external mode, if given, it must
    /// match the embedding file token for token.
    pub corpus: Option<PathBuf>,
    /// Held-out set: a tagged corpus, or an embedding file in external mode.
    /// Without it the corpus is split by `val_fraction`.
    pub val_corpus: Option<PathBuf>,
    /// Contextual embedding file, required in external mode.
    pub embeddings: Option<PathBuf>,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    /// The configuration actually used (external mode fixes `emb_dim`).
    pub config: ExperimentConfig,
    pub metrics: Vec<EpochMetrics>,
    pub tagger: Tagger,
}

fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    parse_corpus(BufReader::new(File::open(path)?))
}

fn read_embeddings(path: &Path) -> Result<Vec<EmbeddedSentence>> {
    Ok(load_context_embeddings(BufReader::new(File::open(path)?))?.sentences)
}

/// Loads the data named by `paths`, splitting off a validation set if needed.
pub fn load_dataset(config: &ExperimentConfig, paths: &CorpusPaths) -> Result<Dataset> {
    match config.embedding_mode {
        EmbeddingMode::Internal => {
            let corpus_path =
                paths.corpus.as_deref().ok_or_else(|| Error::Config("a training corpus is required".into()))?;
            let corpus = read_corpus(corpus_path)?;
            let (train, val) = match &paths.val_corpus {
                Some(p) => (corpus, read_corpus(p)?),
                None => split(&corpus, config.val_fraction, config.seed)?,
            };
            Dataset::internal(&train, &val, config.min_freq)
        }
        EmbeddingMode::External => {
            let path = paths
                .embeddings
                .as_deref()
                .ok_or_else(|| Error::Config("external embedding mode needs an embedding file".into()))?;
            if !path.exists() {
                return Err(Error::Config(format!("embedding file {} does not exist", path.display())));
            }
            let embedded = read_embeddings(path)?;
            if let Some(corpus_path) = &paths.corpus {
                let corpus = read_corpus(corpus_path)?;
                let same =
                    corpus.len() == embedded.len() && corpus.iter().zip(&embedded).all(|(c, e)| *c == e.sentence());
                if !same {
                    return Err(Error::Format("corpus and embedding file contain different sentences".into()));
                }
            }
            let (train, val) = match &paths.val_corpus {
                Some(p) => (embedded, read_embeddings(p)?),
                None => split(&embedded, config.val_fraction, config.seed)?,
            };
            Dataset::external(&train, &val)
        }
    }
}

/// Loads data, trains, and writes `curves.csv` plus the model files into `out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    paths: &CorpusPaths,
    out_dir: &Path,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<ExperimentRun> {
    config.validate()?;
    let data = load_dataset(config, paths)?;
    let mut config = config.clone();
    if let Some(dim) = data.input_dim {
        config.emb_dim = dim;
    }
    let (model, metrics) = train(&config, &data, on_epoch)?;
    fs::create_dir_all(out_dir)?;
    export_curves(&metrics, &out_dir.join(CURVES_FILE))?;
    let tagger = Tagger { model, vocab: data.vocab, tags: data.tags };
    tagger.save(out_dir, &config.metadata())?;
    Ok(ExperimentRun { config, metrics, tagger })
}

pub const CURVES_FILE: &str = "curves.csv";
pub const MODEL_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TAGS_FILE: &str = "tags.txt";

/// A trained model with the inventories it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    pub model: Model,
    pub vocab: Vocab,
    pub tags: TagSet,
}

impl Tagger {
    pub fn new(model: Model, vocab: Vocab, tags: TagSet) -> Result<Self> {
        if tags.len() != model.num_tags() {
            return Err(Error::Dimension(format!(
                "tag file lists {} tags, model has {}",
                tags.len(),
                model.num_tags()
            )));
        }
        if model.mode() == EmbeddingMode::Internal && vocab.len() != model.encoder.vocab_size() {
            return Err(Error::Dimension(format!(
                "vocabulary has {} entries, embedding table has {} rows",
                vocab.len(),
                model.encoder.vocab_size()
            )));
        }
        Ok(Self { model, vocab, tags })
    }

    /// Writes `model.ckpt`, `vocab.txt` and `tags.txt` into `dir`.
    pub fn save(&self, dir: &Path, meta: &Metadata) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut meta = meta.clone();
        meta.insert("embedding_mode".into(), self.model.mode().to_string());
        let mut w = BufWriter::new(File::create(dir.join(MODEL_FILE))?);
        save_checkpoint(&mut w, &self.model, &meta)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(VOCAB_FILE))?);
        self.vocab.write(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(TAGS_FILE))?);
        self.tags.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, Metadata)> {
        let (model, meta) = load_checkpoint(BufReader::new(File::open(dir.join(MODEL_FILE))?))?;
        let vocab = Vocab::read(BufReader::new(File::open(dir.join(VOCAB_FILE))?))?;
        let tags = TagSet::read(BufReader::new(File::open(dir.join(TAGS_FILE))?))?;
        Ok((Self::new(model, vocab, tags)?, meta))
    }

    /// Tags a tokenized sentence (internal-embedding models).
    pub fn tag_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<String>> {
        if self.model.mode() != EmbeddingMode::Internal {
            return Err(Error::Config("this model reads contextual vectors; tag an embedding file instead".into()));
        }
        let ids: Vec<usize> = tokens.iter().map(|t| self.vocab.id(t.as_ref())).collect();
        self.tag_input(TokenInput::Ids(&ids))
    }

    pub fn tag_input(&self, input: TokenInput<'_>) -> Result<Vec<String>> {
        let path = self.model.predict(input)?;
        Ok(path.into_iter().map(|id| self.tags.tag(id).expect("decoded tag in range").to_string()).collect())
    }

    /// Encodes gold sentences against this tagger's inventories.
    pub fn encode_sentences(&self, sentences: &[Sentence]) -> Result<Vec<EncodedSentence>> {
        sentences
            .iter()
            .map(|s| {
                let (ids, tags) = encode(s, &self.vocab, &self.tags)?;
                Ok(EncodedSentence { input: SentenceInput::Ids(ids), tags })
            })
            .collect()
    }

    pub fn encode_embedded(&self, sentences: &[EmbeddedSentence]) -> Result<Vec<EncodedSentence>> {
        sentences
            .iter()
            .map(|s| {
                Ok(EncodedSentence {
                    input: SentenceInput::Vectors(s.vectors.clone()),
                    tags: s.tags.iter().map(|t| self.tags.id(t)).collect::<Result<_>>()?,
                })
            })
            .collect()
    }
}

/// `x` with `digits` significant digits, in the style of C's `%g`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{exp}", trim_fraction(mantissa))
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes the per-epoch curves CSV.
pub fn export_curves(metrics: &[EpochMetrics], path: &Path) -> Result<()> {
    if metrics.is_empty() {
        return Err(Error::Config("no metrics to export".into()));
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(CURVES_HEADER)?;
    for m in metrics {
        let g = |x: f64| format_significant(x, 6);
        writer.write_record([
            m.epoch.to_string(),
            g(m.train_loss),
            g(m.train_acc),
            g(m.val_loss),
            g(m.val_acc),
            g(m.lr),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a curves CSV back.
pub fn read_curves(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut reader = csv::Reader::from_path(path)?;
    if reader.headers()?.iter().ne(CURVES_HEADER) {
        return Err(Error::Format(format!("unexpected curves header in {}", path.display())));
    }
    let mut metrics = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |k: usize| -> Result<f64> {
            record
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(line, format!("bad {} value", CURVES_HEADER[k])))
        };
        metrics.push(EpochMetrics {
            epoch: record.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| Error::parse(line, "bad epoch"))?,
            train_loss: field(1)?,
            train_acc: field(2)?,
            val_loss: field(3)?,
            val_acc: field(4)?,
            lr: field(5)?,
        });
    }
    Ok(metrics)
}
