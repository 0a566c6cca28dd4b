//! Independent reference computations: brute-force enumeration over all tag
//! paths and central finite differences. Nothing in here calls the dynamic
//! programs under test.
#![allow(dead_code)]

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semtag::trainer::sentence_loss_and_grads;
use semtag::{CrfParams, EmissionMatrix, EncodedSentence, EncoderParams, Model, Parameters, TokenInput};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every path of length `len` over `k` tags, in lexicographic order.
pub fn all_paths(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![vec![]];
    for _ in 0..len {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    paths
}

/// Path score summed straight from the raw matrices.
pub fn hand_score(transitions: &Array2<f64>, emissions: &Array2<f64>, path: &[usize]) -> f64 {
    let k = emissions.ncols();
    let (start, stop) = (k, k + 1);
    let mut s = transitions[[start, path[0]]] + transitions[[path[path.len() - 1], stop]];
    for t in 0..path.len() {
        s += emissions[[t, path[t]]];
        if t + 1 < path.len() {
            s += transitions[[path[t], path[t + 1]]];
        }
    }
    s
}

pub struct Enumeration {
    pub paths: Vec<Vec<usize>>,
    pub scores: Vec<f64>,
    pub log_z: f64,
}

pub fn enumerate(transitions: &Array2<f64>, emissions: &Array2<f64>) -> Enumeration {
    let (len, k) = emissions.dim();
    let paths = all_paths(len, k);
    let scores: Vec<f64> = paths.iter().map(|p| hand_score(transitions, emissions, p)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Enumeration { paths, scores, log_z }
}

impl Enumeration {
    pub fn unary(&self, len: usize, k: usize) -> Array2<f64> {
        let mut u = Array2::zeros((len, k));
        for (p, s) in self.paths.iter().zip(&self.scores) {
            let prob = (s - self.log_z).exp();
            for (t, &y) in p.iter().enumerate() {
                u[[t, y]] += prob;
            }
        }
        u
    }

    pub fn pairwise(&self, len: usize, k: usize) -> Array3<f64> {
        let mut m = Array3::zeros((len.saturating_sub(1), k, k));
        for (p, s) in self.paths.iter().zip(&self.scores) {
            let prob = (s - self.log_z).exp();
            for t in 0..len.saturating_sub(1) {
                m[[t, p[t], p[t + 1]]] += prob;
            }
        }
        m
    }

    /// Best path; among exact ties, the one whose tags read from the last
    /// position backwards are lexicographically smallest.
    pub fn argmax(&self) -> (Vec<usize>, f64) {
        let mut best: Option<(&Vec<usize>, f64)> = None;
        for (p, &s) in self.paths.iter().zip(&self.scores) {
            best = match best {
                None => Some((p, s)),
                Some((bp, bs)) => {
                    let rev_less = p.iter().rev().lt(bp.iter().rev());
                    if s > bs || (s == bs && rev_less) {
                        Some((p, s))
                    } else {
                        Some((bp, bs))
                    }
                }
            };
        }
        let (p, s) = best.expect("at least one path");
        (p.clone(), s)
    }
}

/// Random CRF with transitions uniform in `[-scale, scale]`.
pub fn random_crf(k: usize, scale: f64, rng: &mut ChaCha8Rng) -> CrfParams {
    let a = Array2::from_shape_fn((k + 2, k + 2), |_| rng.random_range(-scale..scale));
    CrfParams::from_transitions(k, a).unwrap()
}

pub fn random_emissions(len: usize, k: usize, scale: f64, rng: &mut ChaCha8Rng) -> EmissionMatrix {
    EmissionMatrix::new(Array2::from_shape_fn((len, k), |_| rng.random_range(-scale..scale))).unwrap()
}

/// Small-integer scores, so that exact ties are common and sums are exact.
pub fn integer_instance(len: usize, k: usize, rng: &mut ChaCha8Rng) -> (CrfParams, EmissionMatrix) {
    let a = Array2::from_shape_fn((k + 2, k + 2), |_| rng.random_range(-1i32..=1) as f64);
    let e = Array2::from_shape_fn((len, k), |_| rng.random_range(-1i32..=1) as f64);
    (CrfParams::from_transitions(k, a).unwrap(), EmissionMatrix::new(e).unwrap())
}

pub fn random_path(len: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..k)).collect()
}

/// Central difference of `f` with respect to every entry of `x`.
pub fn central_diff(x: &mut [f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let plus = f(x);
            x[i] = orig - step;
            let minus = f(x);
            x[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference norm when both
/// are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative error per encoder tensor between `backward` and central
/// differences of `sum(cotangent * emissions)`, in `tensors()` order.
pub fn encoder_tensor_errors(
    params: &EncoderParams,
    input: TokenInput<'_>,
    cotangent: &Array2<f64>,
    step: f64,
) -> Vec<(&'static str, f64)> {
    let (_, tape) = params.forward(input).unwrap();
    let analytic = params.backward(&tape, cotangent).unwrap().to_dense(params);
    let objective = |p: &EncoderParams| {
        let (e, _) = p.forward(input).unwrap();
        (e.scores() * cotangent).sum()
    };
    params
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, &(name, values))| {
            let mut x = values.to_vec();
            let mut probe = params.clone();
            let numeric = central_diff(&mut x, step, |x| {
                probe.tensors_mut()[i].copy_from_slice(x);
                objective(&probe)
            });
            (name, rel_err(analytic.tensors()[i].1, &numeric))
        })
        .collect()
}

/// Relative error of the input cotangent for vector inputs.
pub fn encoder_input_error(params: &EncoderParams, vectors: &Array2<f64>, cotangent: &Array2<f64>, step: f64) -> f64 {
    let (_, tape) = params.forward(TokenInput::Vectors(vectors.view())).unwrap();
    let analytic = params.backward(&tape, cotangent).unwrap().d_inputs;
    let mut x: Vec<f64> = vectors.iter().copied().collect();
    let numeric = central_diff(&mut x, step, |x| {
        let v = Array2::from_shape_vec(vectors.dim(), x.to_vec()).unwrap();
        let (e, _) = params.forward(TokenInput::Vectors(v.view())).unwrap();
        (e.scores() * cotangent).sum()
    });
    rel_err(analytic.as_slice().unwrap(), &numeric)
}

/// Relative error of the full model gradient (encoder and CRF composed)
/// against central differences of the sentence loss.
pub fn model_gradient_error(model: &Model, sentence: &EncodedSentence, step: f64) -> f64 {
    let (_, enc, crf) = sentence_loss_and_grads(model, sentence).unwrap();
    let mut grads = model.zero_grads();
    grads.add_scaled(&enc, &crf, 1.0);
    let analytic: Vec<f64> = grads.slices().concat();

    let mut x: Vec<f64> = model.slices().concat();
    let mut probe = model.clone();
    let numeric = central_diff(&mut x, step, |x| {
        let mut offset = 0;
        for s in probe.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&x[offset..offset + n]);
            offset += n;
        }
        probe.loss(sentence.input(), &sentence.tags).unwrap()
    });
    rel_err(&analytic, &numeric)
}

/// Small random model with biases and transitions pushed off their defaults.
pub fn random_model(vocab: usize, dim: usize, hidden: usize, k: usize, rng: &mut ChaCha8Rng) -> Model {
    let mut encoder = EncoderParams::init(vocab, dim, hidden, k, rng.random()).unwrap();
    encoder.lstm_bias.mapv_inplace(|b| b + rng.random_range(-0.5..0.5));
    encoder.out_bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    encoder.embedding.mapv_inplace(|w| 2.0 * w);
    Model::from_parts(encoder, random_crf(k, 1.0, rng)).unwrap()
}
