//! Reads a tagged corpus and a contextual-embedding file, builds the
//! vocabulary and tag set, splits off a validation set and encodes sentences.
//!
//! cargo run --example corpus_pipeline [corpus.tsv] [vectors.vec]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use semtag::data::{encode, load_context_embeddings, parse_corpus, split, UNK};
use semtag::{Dataset, Sentence};

fn main() -> semtag::Result<()> {
    let data_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let mut args = std::env::args().skip(1);
    let corpus_path = args.next().map_or(data_dir.join("sample.tsv"), PathBuf::from);
    let vectors_path = args.next().map_or(data_dir.join("sample.vec"), PathBuf::from);

    let corpus = parse_corpus(BufReader::new(File::open(&corpus_path)?))?;
    let tokens: usize = corpus.iter().map(Sentence::len).sum();
    println!("{}: {} sentences, {tokens} tokens", corpus_path.display(), corpus.len());

    let (train, val) = split(&corpus, 0.2, 1)?;
    let data = Dataset::internal(&train, &val, 1)?;
    println!(
        "split {} / {}; vocabulary {} (id 0 is {UNK}), {} tags: {}",
        train.len(),
        val.len(),
        data.vocab.len(),
        data.tags.len(),
        data.tags.tags().collect::<Vec<_>>().join(" ")
    );
    for sentence in &val {
        let (ids, tag_ids) = encode(sentence, &data.vocab, &data.tags)?;
        println!("  {:?}\n    ids {ids:?}\n    tags {tag_ids:?}", sentence.tokens);
    }

    let embeddings = load_context_embeddings(BufReader::new(File::open(&vectors_path)?))?;
    println!("{}: {} sentences of {}-dim vectors", vectors_path.display(), embeddings.sentences.len(), embeddings.dim);
    for note in &embeddings.provenance {
        println!("  # {note}");
    }
    Ok(())
}
