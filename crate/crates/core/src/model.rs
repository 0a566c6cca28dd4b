//! The full tagger: encoder emissions scored by a CRF.

use ndarray::Array2;

use crate::crf::{CrfGradients, CrfParams, EmissionMatrix};
use crate::encoder::{EncoderGradients, EncoderParams, EncoderTape, TokenInput};
use crate::error::{Error, Result};
use crate::optim::Parameters;

/// How tokens reach the LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbeddingMode {
    /// Learned embedding table over the vocabulary.
    Internal,
    /// Precomputed contextual vectors read from an embedding file.
    External,
}

impl std::fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmbeddingMode::Internal => "internal",
            EmbeddingMode::External => "external",
        })
    }
}

impl std::str::FromStr for EmbeddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "internal" => Ok(EmbeddingMode::Internal),
            "external" => Ok(EmbeddingMode::External),
            other => Err(Error::Config(format!("unknown embedding mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub crf: CrfParams,
}

impl Model {
    /// Seeded encoder weights and zero transitions.
    pub fn init(
        mode: EmbeddingMode,
        vocab_size: usize,
        input_dim: usize,
        hidden_dim: usize,
        num_tags: usize,
        seed: u64,
    ) -> Result<Self> {
        let encoder = match mode {
            EmbeddingMode::Internal => EncoderParams::init(vocab_size, input_dim, hidden_dim, num_tags, seed)?,
            EmbeddingMode::External => EncoderParams::init_external(input_dim, hidden_dim, num_tags, seed)?,
        };
        Ok(Self { encoder, crf: CrfParams::new(num_tags)? })
    }

    pub fn from_parts(encoder: EncoderParams, crf: CrfParams) -> Result<Self> {
        encoder.validate()?;
        if encoder.num_tags() != crf.num_tags() {
            return Err(Error::Dimension(format!(
                "encoder scores {} tags, CRF has {}",
                encoder.num_tags(),
                crf.num_tags()
            )));
        }
        Ok(Self { encoder, crf })
    }

    pub fn mode(&self) -> EmbeddingMode {
        if self.encoder.vocab_size() == 0 {
            EmbeddingMode::External
        } else {
            EmbeddingMode::Internal
        }
    }

    pub fn num_tags(&self) -> usize {
        self.crf.num_tags()
    }

    pub fn emissions(&self, input: TokenInput<'_>) -> Result<(EmissionMatrix, EncoderTape)> {
        self.encoder.forward(input)
    }

    /// Viterbi tags for one sentence.
    pub fn predict(&self, input: TokenInput<'_>) -> Result<Vec<usize>> {
        let (emissions, _) = self.emissions(input)?;
        Ok(self.crf.viterbi_decode(&emissions)?.0)
    }

    /// Negative log-likelihood of `gold` for one sentence.
    pub fn loss(&self, input: TokenInput<'_>, gold: &[usize]) -> Result<f64> {
        let (emissions, _) = self.emissions(input)?;
        self.crf.nll_loss(&emissions, gold)
    }

    /// Zero gradient buffer with this model's layout.
    pub fn zero_grads(&self) -> ModelGrads {
        let e = &self.encoder;
        ModelGrads {
            encoder: EncoderParams::zeros(e.vocab_size(), e.input_dim(), e.hidden_dim(), e.num_tags()),
            transitions: Array2::zeros(self.crf.transitions().dim()),
        }
    }
}

impl Parameters for Model {
    fn slices(&self) -> Vec<&[f64]> {
        let mut s = self.encoder.slices();
        s.extend(self.crf.slices());
        s
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut s = self.encoder.slices_mut();
        s.extend(self.crf.slices_mut());
        s
    }
}

/// Dense gradient buffer laid out like [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: EncoderParams,
    pub transitions: Array2<f64>,
}

impl ModelGrads {
    pub fn add_scaled(&mut self, encoder: &EncoderGradients, crf: &CrfGradients, scale: f64) {
        encoder.add_scaled_to(&mut self.encoder, scale);
        self.transitions.scaled_add(scale, &crf.d_transitions);
    }
}

impl Parameters for ModelGrads {
    fn slices(&self) -> Vec<&[f64]> {
        let mut s = self.encoder.slices();
        s.extend(self.transitions.slices());
        s
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut s = self.encoder.slices_mut();
        s.extend(self.transitions.slices_mut());
        s
    }
}
