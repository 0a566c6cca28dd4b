//! Trains on precomputed per-token vectors instead of a learned embedding
//! table, using the largest reference configuration (SGD, 768-dim input,
//! hidden size 600). Random vectors stand in for a contextual model.
//!
//! cargo run --release --example contextual_embeddings [epochs]

use std::time::Instant;

use semtag::data::split;
use semtag::synthetic::{random_token_vectors, ToyCorpus};
use semtag::trainer::train;
use semtag::{Dataset, ExperimentConfig};

fn main() -> semtag::Result<()> {
    let epochs = std::env::args().nth(1).map_or(3, |s| s.parse().expect("epochs must be an integer"));
    let toy = ToyCorpus { vocab_size: 100, ..ToyCorpus::default() };
    let embedded = random_token_vectors(&toy.generate(), 768, 1);
    let (train_set, val_set) = split(&embedded, 0.1, 1)?;
    let data = Dataset::external(&train_set, &val_set)?;
    let config = ExperimentConfig { epochs, ..ExperimentConfig::grid(7)? };
    println!(
        "{} training sentences, {}-dim inputs, hidden {}, {} tags",
        data.train.len(),
        config.emb_dim,
        config.hidden_dim,
        data.tags.len()
    );

    let mut last = Instant::now();
    train(&config, &data, |m| {
        println!(
            "epoch {:>2}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}  ({:.1?})",
            m.epoch,
            m.train_loss,
            m.train_acc,
            m.val_loss,
            m.val_acc,
            last.elapsed()
        );
        last = Instant::now();
    })?;
    Ok(())
}
