//! Compares the hand-derived gradients of the full tagger (LSTM encoder plus
//! CRF loss) with central finite differences, tensor by tensor.
//!
//! cargo run --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semtag::trainer::{sentence_loss_and_grads, EncodedSentence, SentenceInput};
use semtag::{EmbeddingMode, Model, Parameters};

const STEP: f64 = 1e-5;

fn main() -> semtag::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (vocab, dim, hidden, tags) = (8, 4, 3, 3);
    let model = Model::init(EmbeddingMode::Internal, vocab, dim, hidden, tags, 11)?;
    let sentence = EncodedSentence {
        input: SentenceInput::Ids((0..5).map(|_| rng.random_range(0..vocab)).collect()),
        tags: (0..5).map(|_| rng.random_range(0..tags)).collect(),
    };

    let (loss, encoder_grads, crf_grads) = sentence_loss_and_grads(&model, &sentence)?;
    let mut analytic = model.zero_grads();
    analytic.add_scaled(&encoder_grads, &crf_grads, 1.0);
    println!("loss {loss:.6}");

    let names = [
        "embedding",
        "lstm_input_weights",
        "lstm_hidden_weights",
        "lstm_bias",
        "out_weights",
        "out_bias",
        "transitions",
    ];
    let mut probe = model.clone();
    for (i, name) in names.iter().enumerate() {
        let n = model.slices()[i].len();
        let mut numeric = vec![0.0; n];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.slices()[i][j];
            probe.slices_mut()[i][j] = orig + STEP;
            let plus = probe.loss(sentence.input(), &sentence.tags)?;
            probe.slices_mut()[i][j] = orig - STEP;
            let minus = probe.loss(sentence.input(), &sentence.tags)?;
            probe.slices_mut()[i][j] = orig;
            *slot = (plus - minus) / (2.0 * STEP);
        }
        let exact = analytic.slices()[i];
        let diff: f64 = exact.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
        println!("{name:>20}: {n:>4} entries, |grad| {norm:.3e}, relative error {:.2e}", diff / norm.max(1e-12));
    }
    Ok(())
}
