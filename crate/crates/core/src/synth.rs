//! Synthetic word-aligned feature datasets with a controllable SNR.
//!
//! Every in-vocabulary word at sentence position `p` gets features
//! `M · t_y + σ ε`, where `t_y` is the keyword vector, `M` a fixed random
//! mixing matrix and `ε` standard normal. Filler words carry pure noise.

use std::collections::HashSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{AnnotatedSentence, AnnotatedToken, Corpus, EegWordSequence, EntityTag, Pos, Segment, Task};
use crate::embedding::EmbeddingBank;
use crate::error::{validation, Error, Result};
use crate::vocab::KeywordVocabulary;

/// Lemma given to filler positions. Never a vocabulary entry.
pub const FILLER_LEMMA: &str = "<out>";
pub const FILLER_SURFACES: [&str; 6] = ["the", "of", "and", "a", "to", "in"];
const MAX_MIXING_ATTEMPTS: usize = 8;

pub(crate) fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    match *v {
        f64::INFINITY => s.serialize_str("inf"),
        f64::NEG_INFINITY => s.serialize_str("-inf"),
        x if x.is_nan() => s.serialize_str("nan"),
        x => s.serialize_f64(x),
    }
}

pub(crate) fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(x) => Ok(x),
        Db::Text(t) => match t.as_str() {
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => other.parse().map_err(serde::de::Error::custom),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub vocab_size: usize,
    pub bank_dim: usize,
    pub feature_dim: usize,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub snr_db: f64,
    pub filler_rate: f64,
    pub sentences: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub subjects: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab_size: 50,
            bank_dim: 32,
            feature_dim: 64,
            snr_db: f64::INFINITY,
            filler_rate: 0.3,
            sentences: 500,
            min_words: 8,
            max_words: 14,
            subjects: 1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.filler_rate) {
            return Err(validation("filler_rate must be in [0, 1)"));
        }
        if self.snr_db.is_nan() {
            return Err(validation("snr_db must be a number or ±inf"));
        }
        if self.feature_dim < self.bank_dim {
            return Err(validation(format!(
                "feature_dim {} < bank_dim {}: mixing matrix cannot have full column rank",
                self.feature_dim, self.bank_dim
            )));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(validation("need 1 <= min_words <= max_words"));
        }
        if self.vocab_size == 0 || self.sentences == 0 || self.subjects == 0 || self.bank_dim == 0 {
            return Err(validation("vocab_size, sentences, subjects and bank_dim must be positive"));
        }
        Ok(())
    }

    /// Noise variance per feature for a given mean signal power per feature.
    pub fn noise_variance(&self, signal_power: f64) -> f64 {
        if self.snr_db == f64::NEG_INFINITY {
            signal_power
        } else {
            signal_power / 10f64.powf(self.snr_db / 10.0)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// `n` distinct pronounceable lemmas (consonant-vowel syllables, no digits).
pub fn synthetic_lemmas(n: usize, seed: u64) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_1E33A);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(C[rng.random_range(0..C.len())] as char);
            w.push(V[rng.random_range(0..V.len())] as char);
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Random vocabulary with unit-norm Gaussian keyword vectors.
pub fn random_keywords(spec: &SynthSpec) -> Result<(KeywordVocabulary, EmbeddingBank)> {
    let lemmas = synthetic_lemmas(spec.vocab_size, spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xBA4C);
    let rows = lemmas
        .iter()
        .map(|l| {
            let v: Vec<f64> = (0..spec.bank_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            (l.clone(), v)
        })
        .collect::<Vec<_>>();
    let bank = EmbeddingBank::from_rows(spec.bank_dim, rows)?.normalized()?;
    Ok((KeywordVocabulary::from_lemmas(&lemmas)?, bank))
}

/// Smallest relative residual norm met while orthogonalizing the columns.
/// Zero (or tiny) means the columns are linearly dependent.
pub fn column_independence(m: &Array2<f64>) -> f64 {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut worst = f64::INFINITY;
    for col in m.columns() {
        let orig = col.dot(&col).sqrt();
        let mut r = col.to_owned();
        for _ in 0..2 {
            for b in &basis {
                let proj = r.dot(b);
                r.scaled_add(-proj, b);
            }
        }
        let n = r.dot(&r).sqrt();
        worst = worst.min(if orig > 0.0 { n / orig } else { 0.0 });
        if n > 0.0 {
            basis.push(r / n);
        }
    }
    worst
}

/// Gaussian `feature_dim × bank_dim` mixing matrix with full column rank.
pub fn mixing_matrix(spec: &SynthSpec) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x313C);
    let scale = 1.0 / (spec.bank_dim as f64).sqrt();
    for _ in 0..MAX_MIXING_ATTEMPTS {
        let m = Array2::from_shape_fn((spec.feature_dim, spec.bank_dim), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        if column_independence(&m) > 1e-8 {
            return Ok(m);
        }
    }
    Err(validation("mixing matrix stayed rank deficient after retries"))
}

pub struct SynthDataset {
    pub corpus: Corpus,
    pub vocab: KeywordVocabulary,
    pub bank: EmbeddingBank,
    pub mixing: Array2<f64>,
    /// Mean signal power per feature over the vocabulary.
    pub signal_power: f64,
}

fn sentence_rng(seed: u64, index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((index as u128) << 20);
    rng
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    let (vocab, bank) = random_keywords(spec)?;
    generate_with(spec, vocab, bank)
}

/// Generation over a given vocabulary and keyword bank.
pub fn generate_with(spec: &SynthSpec, vocab: KeywordVocabulary, bank: EmbeddingBank) -> Result<SynthDataset> {
    spec.validate()?;
    if bank.dim() != spec.bank_dim {
        return Err(validation(format!("keyword bank dim {} != bank_dim {}", bank.dim(), spec.bank_dim)));
    }
    let lemmas = vocab.lemmas();
    let bank = bank.select(&lemmas)?;
    let mixing = mixing_matrix(spec)?;
    let t = Array2::from_shape_vec((lemmas.len(), spec.bank_dim), bank.as_flat().to_vec()).expect("bank shape");
    // one clean signal row per keyword
    let signals = t.dot(&mixing.t());
    let signal_power = signals.mapv(|v| v * v).mean().unwrap_or(0.0);
    let sigma = spec.noise_variance(signal_power).sqrt();
    let filler_sigma = signal_power.sqrt();
    let pure_noise = spec.snr_db == f64::NEG_INFINITY;

    let per_sentence: Vec<(AnnotatedSentence, Vec<EegWordSequence>)> = (0..spec.sentences)
        .into_par_iter()
        .map(|i| {
            let mut rng = sentence_rng(spec.seed, i, 0);
            let n = rng.random_range(spec.min_words..=spec.max_words);
            let mut tokens = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for position in 0..n {
                if rng.random::<f64>() < spec.filler_rate {
                    let surface = FILLER_SURFACES[rng.random_range(0..FILLER_SURFACES.len())];
                    tokens.push(AnnotatedToken {
                        surface: surface.into(),
                        lemma: FILLER_LEMMA.into(),
                        pos: Pos::Other,
                        entity: EntityTag::None,
                        position,
                    });
                    labels.push(None);
                } else {
                    let y = rng.random_range(0..lemmas.len());
                    tokens.push(AnnotatedToken {
                        surface: lemmas[y].clone(),
                        lemma: lemmas[y].clone(),
                        pos: Pos::Noun,
                        entity: EntityTag::None,
                        position,
                    });
                    labels.push(Some(y));
                }
            }
            let text = tokens.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ") + ".";
            let sentence = AnnotatedSentence {
                sentence_id: format!("syn{i:05}"),
                task: Task::SR1,
                text,
                tokens,
            };
            let samples = (0..spec.subjects)
                .map(|subj| {
                    let mut rng = sentence_rng(spec.seed, i, 1 + subj as u64);
                    let segments = labels
                        .iter()
                        .enumerate()
                        .map(|(position, label)| {
                            let features = (0..spec.feature_dim)
                                .map(|f| {
                                    let z: f64 = StandardNormal.sample(&mut rng);
                                    match label {
                                        Some(y) if !pure_noise => signals[[*y, f]] + sigma * z,
                                        Some(_) => sigma * z,
                                        None => filler_sigma * z,
                                    }
                                })
                                .collect();
                            Segment { position, features }
                        })
                        .collect();
                    EegWordSequence {
                        sentence_id: sentence.sentence_id.clone(),
                        subject_id: format!("S{:02}", subj + 1),
                        segments,
                    }
                })
                .collect();
            (sentence, samples)
        })
        .collect();

    let mut sentences = Vec::with_capacity(spec.sentences);
    let mut samples = Vec::with_capacity(spec.sentences * spec.subjects);
    for (s, ss) in per_sentence {
        sentences.push(s);
        samples.extend(ss);
    }
    Ok(SynthDataset {
        corpus: Corpus::new(sentences, samples, spec.feature_dim)?,
        vocab,
        bank,
        mixing,
        signal_power,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrReport {
    #[serde(serialize_with = "ser_db")]
    pub measured_db: f64,
    pub signal_power: f64,
    pub noise_power: f64,
    pub segments: usize,
}

/// Empirical signal-to-noise ratio over all in-vocabulary segments, with the
/// clean signal reconstructed from the mixing matrix and keyword bank.
pub fn snr_report(data: &SynthDataset) -> SnrReport {
    let t = Array2::from_shape_vec((data.vocab.len(), data.bank.dim()), data.bank.as_flat().to_vec())
        .expect("bank shape");
    let signals = t.dot(&data.mixing.t());
    let (mut sp, mut np, mut count) = (0.0, 0.0, 0usize);
    for sample in data.corpus.samples() {
        let sentence = data.corpus.sentence(&sample.sentence_id).expect("validated corpus");
        for seg in &sample.segments {
            let Some(y) = data.vocab.id_of(&sentence.tokens[seg.position].lemma) else {
                continue;
            };
            for (f, &x) in seg.features.iter().enumerate() {
                let s = signals[[y, f]];
                sp += s * s;
                np += (x - s) * (x - s);
            }
            count += 1;
        }
    }
    let measured_db = if np == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (sp / np).log10()
    };
    let n = (count * data.corpus.feature_dim()).max(1) as f64;
    SnrReport {
        measured_db,
        signal_power: sp / n,
        noise_power: np / n,
        segments: count,
    }
}
