//! Runs the reference experiment grid on a synthetic corpus and prints a
//! summary table. Experiment 7 needs 768-dim input vectors; pass `--with-7`
//! to include it with random stand-in vectors (slow: hidden size 600).
//!
//! cargo run --release --example experiment_grid [--epochs N] [--with-7]

use semtag::data::split;
use semtag::model::EmbeddingMode;
use semtag::synthetic::{random_token_vectors, ToyCorpus};
use semtag::trainer::train;
use semtag::{Dataset, ExperimentConfig};

fn main() -> semtag::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: Option<usize> =
        args.iter().position(|a| a == "--epochs").map(|i| args[i + 1].parse().expect("--epochs takes an integer"));
    let with_7 = args.iter().any(|a| a == "--with-7");

    let toy = ToyCorpus { vocab_size: 100, ..ToyCorpus::default() };
    let sentences = toy.generate();
    let (train_set, val_set) = split(&sentences, 0.1, 1)?;
    let internal = Dataset::internal(&train_set, &val_set, 1)?;

    println!("exp  opt   epochs  batch  emb  hidden  train_acc  val_acc  val_loss");
    for mut config in ExperimentConfig::grid_all() {
        if let Some(e) = epochs {
            config.epochs = e;
        }
        let data = match config.embedding_mode {
            EmbeddingMode::Internal => internal.clone(),
            EmbeddingMode::External if with_7 => {
                let embedded = random_token_vectors(&sentences, config.emb_dim, 1);
                let (tr, va) = split(&embedded, 0.1, 1)?;
                Dataset::external(&tr, &va)?
            }
            EmbeddingMode::External => {
                println!("{:>3}  skipped (needs --with-7)", config.id);
                continue;
            }
        };
        let (_, metrics) = train(&config, &data, |_| {})?;
        let last = metrics[metrics.len() - 1];
        println!(
            "{:>3}  {:<4}  {:>6}  {:>5}  {:>3}  {:>6}  {:>9.4}  {:>7.4}  {:>8.4}",
            config.id,
            config.optimizer,
            config.epochs,
            config.batch_size,
            config.emb_dim,
            config.hidden_dim,
            last.train_acc,
            last.val_acc,
            last.val_loss
        );
    }
    Ok(())
}
