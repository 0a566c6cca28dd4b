//! Scores, normalizes and decodes tag paths with a hand-set linear-chain CRF.
//!
//! cargo run --example crf_inference

use ndarray::{array, Array2};
use semtag::{CrfParams, EmissionMatrix};

fn main() -> semtag::Result<()> {
    // three tags; rows/cols 3 and 4 are the START and STOP states
    let k = 3;
    let mut a = Array2::zeros((k + 2, k + 2));
    a[[0, 0]] = -2.0; // discourage repeating tag 0
    a[[1, 2]] = 1.5; // tag 1 likes to be followed by tag 2
    a[[k, 1]] = 0.5; // sentences like to open with tag 1
    let crf = CrfParams::from_transitions(k, a)?;

    let emissions = EmissionMatrix::new(array![[1.0, 0.8, 0.1], [0.9, 0.2, 0.7], [0.3, 0.1, 1.2], [2.0, 0.0, 0.0],])?;

    let log_z = crf.log_partition(&emissions)?;
    println!("log Z = {log_z:.4}  ({} paths)", k.pow(emissions.len() as u32));

    for path in [[0, 0, 2, 0], [1, 2, 2, 0], [0, 2, 2, 0]] {
        let score = crf.score_path(&emissions, &path)?;
        println!(
            "path {path:?}: score {score:.3}, probability {:.4}, nll {:.4}",
            (score - log_z).exp(),
            crf.nll_loss(&emissions, &path)?
        );
    }

    let (best, best_score) = crf.viterbi_decode(&emissions)?;
    println!("viterbi: {best:?} with score {best_score:.3}");

    let marginals = crf.marginals(&emissions)?;
    println!("per-position tag marginals:");
    for (t, row) in marginals.unary.rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
        println!("  t={t}: {}", cells.join("  "));
    }

    let grads = crf.nll_grad(&emissions, &best)?;
    println!("d nll / d emissions for the viterbi path:\n{:.3}", grads.d_emissions);
    Ok(())
}
