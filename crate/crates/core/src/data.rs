//! Corpus files, vocabularies and the train/validation split.
//!
//! Two text formats are read here.
//!
//! Tagged corpus: one `token<TAB>tag` pair per line, sentences separated by
//! one or more blank lines, lines starting with `#` ignored.
//!
//! Contextual embeddings: for each sentence a header line `<num_tokens> <dim>`
//! followed by `num_tokens` lines of `token<TAB>tag<TAB>v1 v2 ... v_dim`, with a
//! blank line between sentences. Lines starting with `#` are kept as
//! provenance notes. `dim` must be the same for the whole file.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Surface form shown for the reserved unknown-token id.
pub const UNK: &str = "<unk>";
/// Id of the unknown token.
pub const UNK_ID: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, tags: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        if tokens.len() != tags.len() {
            return Err(Error::Dimension(format!("{} tokens but {} tags", tokens.len(), tags.len())));
        }
        Ok(Self { tokens, tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Reads a tagged corpus.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let (mut tokens, mut tags) = (Vec::new(), Vec::new());
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence { tokens: std::mem::take(&mut tokens), tags: std::mem::take(&mut tags) });
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(token), Some(tag), None) if !token.is_empty() && !tag.is_empty() => {
                tokens.push(token.to_string());
                tags.push(tag.to_string());
            }
            _ => return Err(Error::parse(i + 1, format!("expected token<TAB>tag, got {line:?}"))),
        }
    }
    if !tokens.is_empty() {
        sentences.push(Sentence { tokens, tags });
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(sentences)
}

pub fn parse_corpus_str(text: &str) -> Result<Vec<Sentence>> {
    parse_corpus(text.as_bytes())
}

/// Writes sentences in the format [`parse_corpus`] reads.
pub fn write_corpus<W: Write>(mut writer: W, sentences: &[Sentence]) -> Result<()> {
    for sentence in sentences {
        for (token, tag) in sentence.tokens.iter().zip(&sentence.tags) {
            writeln!(writer, "{token}\t{tag}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Token inventory. Id 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary over tokens seen at least `min_freq` times, ids in
    /// order of first appearance.
    pub fn build<'a, I>(sentences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order = Vec::new();
        for sentence in sentences {
            for token in &sentence.tokens {
                let count = counts.entry(token.as_str()).or_insert_with(|| {
                    order.push(token.as_str());
                    0
                });
                *count += 1;
            }
        }
        Self::from_tokens(order.into_iter().filter(|t| counts[t] >= min_freq.max(1)).map(str::to_string))
            .expect("tokens are distinct")
    }

    /// Vocabulary over `tokens` in order, after the reserved slot.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut id_to_token = vec![UNK.to_string()];
        let mut token_to_id = HashMap::new();
        for token in tokens {
            let id = id_to_token.len();
            if token_to_id.insert(token.clone(), id).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary entry {token:?}")));
            }
            id_to_token.push(token);
        }
        Ok(Self { id_to_token, token_to_id })
    }

    /// Number of ids, including the reserved one.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or [`UNK_ID`].
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Known tokens in id order, without the reserved entry.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token[1..].iter().map(String::as_str)
    }

    /// One token per line in id order, starting with the reserved entry.
    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for token in &self.id_to_token {
            writeln!(writer, "{token}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        match lines.next().transpose()? {
            Some(first) if first == UNK => {}
            _ => return Err(Error::parse(1, format!("vocabulary must start with {UNK}"))),
        }
        Self::from_tokens(lines.collect::<std::io::Result<Vec<_>>>()?)
    }
}

/// Closed tag inventory with lexicographically ordered ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    id_to_tag: Vec<String>,
    tag_to_id: HashMap<String, usize>,
    meta: Option<Vec<String>>,
}

impl TagSet {
    pub fn build<'a, I>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let tags: BTreeSet<&str> = sentences.into_iter().flat_map(|s| s.tags.iter().map(String::as_str)).collect();
        Self::from_tags(tags.into_iter().map(str::to_string)).expect("tags are distinct")
    }

    /// Tags are sorted, so the input order does not matter.
    pub fn from_tags<I: IntoIterator<Item = String>>(tags: I) -> Result<Self> {
        let mut id_to_tag: Vec<String> = tags.into_iter().collect();
        id_to_tag.sort();
        let before = id_to_tag.len();
        id_to_tag.dedup();
        if id_to_tag.len() != before {
            return Err(Error::Format("duplicate tag".into()));
        }
        if id_to_tag.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let tag_to_id = id_to_tag.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self { id_to_tag, tag_to_id, meta: None })
    }

    pub fn len(&self) -> usize {
        self.id_to_tag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_tag.is_empty()
    }

    pub fn id(&self, tag: &str) -> Result<usize> {
        self.tag_to_id.get(tag).copied().ok_or_else(|| Error::UnknownTag(tag.to_string()))
    }

    pub fn tag(&self, id: usize) -> Option<&str> {
        self.id_to_tag.get(id).map(String::as_str)
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.id_to_tag.iter().map(String::as_str)
    }

    /// Attaches a tag to meta-tag map (`tag<TAB>meta` lines). Every tag in the
    /// set must be covered.
    pub fn with_meta_tags<R: BufRead>(mut self, reader: R) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (tag, meta) = line.split_once('\t').ok_or_else(|| Error::parse(i + 1, "expected tag<TAB>meta-tag"))?;
            map.insert(tag.to_string(), meta.to_string());
        }
        let meta = self
            .id_to_tag
            .iter()
            .map(|t| map.get(t).cloned().ok_or_else(|| Error::Format(format!("no meta-tag for {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        self.meta = Some(meta);
        Ok(self)
    }

    /// Meta-tag of a tag id, when a map is attached.
    pub fn meta_tag(&self, id: usize) -> Option<&str> {
        self.meta.as_ref()?.get(id).map(String::as_str)
    }

    pub fn has_meta_tags(&self) -> bool {
        self.meta.is_some()
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for tag in &self.id_to_tag {
            writeln!(writer, "{tag}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let tags = reader.lines().collect::<std::io::Result<Vec<_>>>()?.into_iter().filter(|l| !l.is_empty());
        Self::from_tags(tags)
    }
}

/// Vocabulary over every token and tag set over every tag in `sentences`.
pub fn build_vocab(sentences: &[Sentence]) -> (Vocab, TagSet) {
    (Vocab::build(sentences, 1), TagSet::build(sentences))
}

/// Maps a sentence to token ids (unknowns become [`UNK_ID`]) and tag ids.
pub fn encode(sentence: &Sentence, vocab: &Vocab, tags: &TagSet) -> Result<(Vec<usize>, Vec<usize>)> {
    if sentence.is_empty() {
        return Err(Error::EmptySentence);
    }
    let token_ids = sentence.tokens.iter().map(|t| vocab.id(t)).collect();
    let tag_ids = sentence.tags.iter().map(|t| tags.id(t)).collect::<Result<_>>()?;
    Ok((token_ids, tag_ids))
}

/// Seeded shuffle, then the first `round(n * val_fraction)` items (at least
/// one, at most `n - 1`) become the validation set.
pub fn split<T: Clone>(items: &[T], val_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction must be in (0, 1), got {val_fraction}")));
    }
    if items.len() < 2 {
        return Err(Error::Config(format!("cannot split {} sentence(s) into train and validation", items.len())));
    }
    let n = items.len();
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = order[..n_val].iter().map(|&i| items[i].clone()).collect();
    let train = order[n_val..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, val))
}

/// A sentence with one precomputed vector per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    /// `T x dim`, row `t` belongs to token `t`.
    pub vectors: Array2<f64>,
}

impl EmbeddedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// The tokens and tags without the vectors.
    pub fn sentence(&self) -> Sentence {
        Sentence { tokens: self.tokens.clone(), tags: self.tags.clone() }
    }
}

/// Contents of a contextual-embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEmbeddings {
    /// `#` lines, without the marker.
    pub provenance: Vec<String>,
    pub dim: usize,
    pub sentences: Vec<EmbeddedSentence>,
}

/// Reads a contextual-embedding file.
pub fn load_context_embeddings<R: BufRead>(reader: R) -> Result<ContextEmbeddings> {
    let mut provenance = Vec::new();
    let mut sentences = Vec::new();
    let mut dim: Option<usize> = None;
    let mut lines = reader.lines().enumerate();

    while let Some((i, line)) = lines.next() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(note) = line.strip_prefix('#') {
            provenance.push(note.trim().to_string());
            continue;
        }
        let header: Vec<&str> = line.split_whitespace().collect();
        let (count, width) = match header.as_slice() {
            [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
                (Ok(n), Ok(d)) if n > 0 && d > 0 => (n, d),
                _ => return Err(Error::parse(lineno, format!("bad sentence header {line:?}"))),
            },
            _ => return Err(Error::parse(lineno, format!("expected \"<num_tokens> <dim>\", got {line:?}"))),
        };
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(Error::Format(format!(
                    "line {lineno}: sentence declares dimension {width}, earlier sentences use {d}"
                )))
            }
            Some(_) => {}
        }

        let mut tokens = Vec::with_capacity(count);
        let mut tags = Vec::with_capacity(count);
        let mut vectors = Array2::zeros((count, width));
        for t in 0..count {
            let (i, line) = lines.next().ok_or_else(|| Error::parse(lineno + t + 1, "unexpected end of file"))?;
            let line = line?;
            let lineno = i + 1;
            let mut fields = line.split('\t');
            let (token, tag, values) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), Some(c), None) if !a.is_empty() && !b.is_empty() => (a, b, c),
                _ => return Err(Error::parse(lineno, "expected token<TAB>tag<TAB>vector")),
            };
            let mut n = 0;
            for value in values.split_whitespace() {
                if n == width {
                    n += 1;
                    break;
                }
                let v: f64 = value.parse().map_err(|_| Error::parse(lineno, format!("bad number {value:?}")))?;
                if !v.is_finite() {
                    return Err(Error::parse(lineno, format!("non-finite value {value:?}")));
                }
                vectors[[t, n]] = v;
                n += 1;
            }
            if n != width {
                let found = values.split_whitespace().count();
                return Err(Error::parse(lineno, format!("vector has {found} values, header declares {width}")));
            }
            tokens.push(token.to_string());
            tags.push(tag.to_string());
        }
        sentences.push(EmbeddedSentence { tokens, tags, vectors });
    }

    match dim {
        Some(dim) => Ok(ContextEmbeddings { provenance, dim, sentences }),
        None => Err(Error::EmptyCorpus),
    }
}

/// Writes the format [`load_context_embeddings`] reads.
pub fn write_context_embeddings<W: Write>(
    mut writer: W,
    provenance: &[String],
    sentences: &[EmbeddedSentence],
) -> Result<()> {
    for note in provenance {
        writeln!(writer, "# {note}")?;
    }
    for (n, sentence) in sentences.iter().enumerate() {
        if n > 0 {
            writeln!(writer)?;
        }
        writeln!(writer, "{} {}", sentence.len(), sentence.dim())?;
        for (t, (token, tag)) in sentence.tokens.iter().zip(&sentence.tags).enumerate() {
            write!(writer, "{token}\t{tag}\t")?;
            for (j, v) in sentence.vectors.row(t).iter().enumerate() {
                if j > 0 {
                    write!(writer, " ")?;
                }
                write!(writer, "{v}")?;
            }
            writeln!(writer)?;
        }
    }
    Ok(())
}
