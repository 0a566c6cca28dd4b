//! LSTM-CRF sequence labeling for semantic tagging.
//!
//! A sentence is turned into a `T x K` matrix of emission scores by an
//! embedding lookup (or precomputed contextual vectors), a unidirectional
//! LSTM and a linear layer; a linear-chain CRF with learned transition scores
//! normalizes over all tag paths and decodes with Viterbi. Every gradient is
//! written by hand: forward-backward marginals for the CRF and
//! backpropagation through time for the LSTM.
//!
//! - [`crf`]: path scores, log partition, marginals, NLL gradient, Viterbi
//! - [`encoder`]: embedding + LSTM + projection, forward and backward
//! - [`optim`]: SGD, Adam, step-decay learning rate
//! - [`data`]: corpus and embedding file formats, vocabularies, splitting
//! - [`trainer`]: batches, epochs, evaluation, experiment grid, curves CSV
//! - [`cli`]: the `semtag` command

pub mod checkpoint;
pub mod cli;
pub mod crf;
pub mod data;
pub mod encoder;
pub mod error;
pub mod model;
pub mod optim;
pub mod synthetic;
pub mod trainer;

pub use crf::{CrfGradients, CrfParams, EmissionMatrix, Marginals, NEG_INF_SENTINEL};
pub use data::{EmbeddedSentence, Sentence, TagSet, Vocab};
pub use encoder::{EncoderGradients, EncoderParams, EncoderTape, TokenInput};
pub use error::{Error, Result};
pub use model::{EmbeddingMode, Model, ModelGrads};
pub use optim::{LrSchedule, OptimState, OptimizerKind, Parameters};
pub use trainer::{Dataset, EncodedSentence, EpochMetrics, Evaluation, ExperimentConfig, Tagger};
