use ndarray::{Array2, ArrayView2};

use super::encoder::{Encoder, EncoderWeights};
use super::EncoderConfig;
use crate::embedding::EmbeddingBank;
use crate::error::{validation, Result};
use crate::vocab::{vocab_hash, KeywordVocabulary};

/// EEG encoder plus the frozen keyword bank it is aligned to.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignerModel {
    pub config: EncoderConfig,
    pub weights: EncoderWeights,
    pub log_tau: f64,
    pub learn_tau: bool,
    vocab: Vec<String>,
    bank: Array2<f64>,
}

impl AlignerModel {
    /// Fresh model. `keyword_bank` must contain every vocabulary lemma with
    /// vectors of length `config.output_dim`; rows are renormalized.
    pub fn new(
        config: EncoderConfig,
        vocab: &KeywordVocabulary,
        keyword_bank: &EmbeddingBank,
        tau: f64,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let weights = EncoderWeights::init(&config, seed);
        Self::from_parts(config, weights, tau.ln(), false, vocab.lemmas(), keyword_bank)
    }

    pub fn from_parts(
        config: EncoderConfig,
        weights: EncoderWeights,
        log_tau: f64,
        learn_tau: bool,
        vocab: Vec<String>,
        keyword_bank: &EmbeddingBank,
    ) -> Result<Self> {
        if keyword_bank.dim() != config.output_dim {
            return Err(validation(format!(
                "keyword bank dim {} differs from encoder output_dim {}",
                keyword_bank.dim(),
                config.output_dim
            )));
        }
        if !log_tau.is_finite() {
            return Err(validation("temperature must be positive and finite"));
        }
        let selected = keyword_bank.select(&vocab)?.normalized()?;
        let bank = Array2::from_shape_vec((vocab.len(), config.output_dim), selected.as_flat().to_vec())
            .expect("bank shape");
        Ok(AlignerModel {
            config,
            weights,
            log_tau,
            learn_tau,
            vocab,
            bank,
        })
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn encoder(&self) -> Encoder<'_> {
        Encoder {
            config: &self.config,
            weights: &self.weights,
        }
    }

    /// Unit-norm outputs, one row per input position.
    pub fn encode(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.encoder().encode(features)
    }

    /// Cosine similarity of each output row to every keyword (rows × V).
    pub fn similarities(&self, outputs: &Array2<f64>) -> Array2<f64> {
        outputs.dot(&self.bank.t())
    }

    pub fn bank(&self) -> &Array2<f64> {
        &self.bank
    }

    pub fn keyword_bank(&self) -> EmbeddingBank {
        EmbeddingBank::from_rows(
            self.config.output_dim,
            self.vocab
                .iter()
                .zip(self.bank.rows())
                .map(|(l, r)| (l.clone(), r.to_vec())),
        )
        .expect("distinct vocabulary")
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_hash(&self) -> String {
        vocab_hash(&self.vocab)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.parameter_count() + usize::from(self.learn_tau)
    }

    pub fn check_vocab(&self, vocab: &KeywordVocabulary) -> Result<()> {
        if vocab.hash() != self.vocab_hash() {
            return Err(validation("vocabulary does not match the one the model was trained with"));
        }
        Ok(())
    }
}
