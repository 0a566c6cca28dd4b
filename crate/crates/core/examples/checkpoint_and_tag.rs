//! Trains a small tagger, saves it to a directory, loads it back and tags
//! new sentences, including a word it has never seen.
//!
//! cargo run --example checkpoint_and_tag [out_dir]

use std::path::PathBuf;

use semtag::data::split;
use semtag::synthetic::ToyCorpus;
use semtag::trainer::{train, Tagger};
use semtag::{Dataset, ExperimentConfig};

fn main() -> semtag::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("semtag-example"), PathBuf::from);

    let corpus = ToyCorpus::default().generate();
    let (train_set, val_set) = split(&corpus, 0.1, 1)?;
    let data = Dataset::internal(&train_set, &val_set, 1)?;
    let config = ExperimentConfig { epochs: 10, ..ExperimentConfig::grid(1)? };
    let (model, metrics) = train(&config, &data, |_| {})?;
    println!("trained {} epochs, val acc {:.3}", metrics.len(), metrics[metrics.len() - 1].val_acc);

    let tagger = Tagger::new(model, data.vocab, data.tags)?;
    let mut meta = semtag::checkpoint::Metadata::new();
    meta.insert("note".into(), "toy example".into());
    tagger.save(&out, &meta)?;
    println!("saved to {}", out.display());

    let (loaded, meta) = Tagger::load(&out)?;
    assert_eq!(loaded, tagger);
    println!("loaded back, metadata {meta:?}");

    for sentence in [vec!["w3", "w8", "w13"], vec!["w0", "unseen", "w19", "w4"]] {
        let tags = loaded.tag_tokens(&sentence)?;
        let pairs: Vec<String> = sentence.iter().zip(&tags).map(|(w, t)| format!("{w}/{t}")).collect();
        println!("  {}", pairs.join(" "));
    }
    Ok(())
}
