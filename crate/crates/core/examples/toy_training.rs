//! Trains the smallest reference configuration on a synthetic corpus where
//! every token has a fixed tag, printing one line per epoch.
//!
//! cargo run --example toy_training [seed]

use semtag::data::split;
use semtag::synthetic::ToyCorpus;
use semtag::trainer::{evaluate, train};
use semtag::{Dataset, ExperimentConfig};

fn main() -> semtag::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(1), |s| s.parse()).expect("seed must be an integer");
    let corpus = ToyCorpus { seed, ..ToyCorpus::default() }.generate();
    let (train_set, val_set) = split(&corpus, 0.1, seed)?;
    let data = Dataset::internal(&train_set, &val_set, 1)?;
    let config = ExperimentConfig { seed, ..ExperimentConfig::grid(1)? };

    println!("epoch  train_loss  train_acc  val_loss  val_acc  lr");
    let start = std::time::Instant::now();
    let (model, _) = train(&config, &data, |m| {
        println!(
            "{:>5}  {:>10.4}  {:>9.4}  {:>8.4}  {:>7.4}  {:.0e}",
            m.epoch, m.train_loss, m.train_acc, m.val_loss, m.val_acc, m.lr
        );
    })?;
    let final_train = evaluate(&model, &data.train)?;
    println!("{} of {} training tokens correct after {:.1?}", final_train.correct, final_train.tokens, start.elapsed());
    Ok(())
}
