//! Annotated reading corpora with word-aligned EEG feature sequences.

mod io;
mod split;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

pub use io::{load_dataset, read_dataset, write_dataset, LoadReport};
pub use split::{loso_folds, split, Part, Split, SplitMode, SplitSpec};

/// Feature dimensionality of the word-level EEG band features.
pub const EEG_FEATURE_DIM: usize = 840;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Propn,
    Verb,
    Adj,
    Other,
}

impl Pos {
    pub fn is_content(self) -> bool {
        !matches!(self, Pos::Other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityTag {
    Person,
    NonpersonEntity,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    SR1,
    NR1,
    NR2,
    TSR1,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::SR1 => "SR1",
            Task::NR1 => "NR1",
            Task::NR2 => "NR2",
            Task::TSR1 => "TSR1",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
    pub entity: EntityTag,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub sentence_id: String,
    pub task: Task,
    pub text: String,
    pub tokens: Vec<AnnotatedToken>,
}

impl AnnotatedSentence {
    pub fn word_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.lemma.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.position != i {
                return Err(validation(format!(
                    "sentence {}: token positions must be contiguous from 0, found {} at index {i}",
                    self.sentence_id, tok.position
                )));
            }
            if tok.lemma.is_empty() {
                return Err(validation(format!(
                    "sentence {}: empty lemma at position {i}",
                    self.sentence_id
                )));
            }
            if tok.lemma != tok.lemma.to_lowercase() {
                return Err(validation(format!(
                    "sentence {}: lemma {:?} is not lowercased",
                    self.sentence_id, tok.lemma
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub position: usize,
    pub features: Vec<f64>,
}

/// One subject's reading of one sentence: ordered word-aligned feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegWordSequence {
    pub sentence_id: String,
    pub subject_id: String,
    pub segments: Vec<Segment>,
}

impl EegWordSequence {
    pub fn validate(&self, sentence: &AnnotatedSentence, feature_dim: usize) -> Result<()> {
        let mut last: Option<usize> = None;
        for seg in &self.segments {
            if seg.features.len() != feature_dim {
                return Err(validation(format!(
                    "sample {}/{}: feature vector at position {} has {} entries, expected {feature_dim}",
                    self.sentence_id,
                    self.subject_id,
                    seg.position,
                    seg.features.len()
                )));
            }
            if seg.features.iter().any(|v| !v.is_finite()) {
                return Err(validation(format!(
                    "sample {}/{}: non-finite feature at position {}",
                    self.sentence_id, self.subject_id, seg.position
                )));
            }
            if last.is_some_and(|p| seg.position <= p) {
                return Err(validation(format!(
                    "sample {}/{}: segment positions must be strictly increasing",
                    self.sentence_id, self.subject_id
                )));
            }
            if seg.position >= sentence.word_count() {
                return Err(validation(format!(
                    "sample {}/{}: segment position {} beyond sentence length {}",
                    self.sentence_id,
                    self.subject_id,
                    seg.position,
                    sentence.word_count()
                )));
            }
            last = Some(seg.position);
        }
        Ok(())
    }
}

/// Validated, immutable corpus of sentences and their EEG samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sentences: Vec<AnnotatedSentence>,
    index: HashMap<String, usize>,
    samples: Vec<EegWordSequence>,
    feature_dim: usize,
}

impl Corpus {
    pub fn new(
        sentences: Vec<AnnotatedSentence>,
        samples: Vec<EegWordSequence>,
        feature_dim: usize,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            s.validate()?;
            if index.insert(s.sentence_id.clone(), i).is_some() {
                return Err(validation(format!("duplicate sentence_id {}", s.sentence_id)));
            }
        }
        for sample in &samples {
            let sentence = index
                .get(&sample.sentence_id)
                .map(|&i| &sentences[i])
                .ok_or_else(|| validation(format!("sample references unknown sentence_id {}", sample.sentence_id)))?;
            sample.validate(sentence, feature_dim)?;
        }
        Ok(Corpus {
            sentences,
            index,
            samples,
            feature_dim,
        })
    }

    pub fn sentences(&self) -> &[AnnotatedSentence] {
        &self.sentences
    }

    pub fn samples(&self) -> &[EegWordSequence] {
        &self.samples
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn sentence(&self, id: &str) -> Option<&AnnotatedSentence> {
        self.index.get(id).map(|&i| &self.sentences[i])
    }

    pub fn sentence_map(&self) -> HashMap<&str, &AnnotatedSentence> {
        self.sentences.iter().map(|s| (s.sentence_id.as_str(), s)).collect()
    }

    /// Distinct subject ids, sorted.
    pub fn subjects(&self) -> Vec<String> {
        let mut subjects: Vec<String> = self
            .samples
            .iter()
            .map(|s| s.subject_id.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        subjects.sort();
        subjects
    }

    /// Sentences of one task, in corpus order.
    pub fn task_pool(&self, task: Task) -> Vec<&AnnotatedSentence> {
        self.sentences.iter().filter(|s| s.task == task).collect()
    }

    /// Same corpus with samples replaced by the alignment-filtered subset.
    pub fn filtered(&self) -> Result<Corpus> {
        let samples = filter_samples(&self.samples, &self.sentence_map())?;
        Ok(Corpus {
            samples,
            ..self.clone()
        })
    }

    pub fn with_samples(&self, samples: Vec<EegWordSequence>) -> Result<Corpus> {
        Corpus::new(self.sentences.clone(), samples, self.feature_dim)
    }
}

/// Minimum number of aligned segments for a sentence of `word_count` words.
pub fn min_segments(word_count: usize) -> usize {
    word_count.div_ceil(2)
}

/// Drops samples with fewer aligned segments than half the sentence's words.
pub fn filter_samples(
    samples: &[EegWordSequence],
    sentences: &HashMap<&str, &AnnotatedSentence>,
) -> Result<Vec<EegWordSequence>> {
    let mut kept = Vec::with_capacity(samples.len());
    for sample in samples {
        let sentence = sentences
            .get(sample.sentence_id.as_str())
            .ok_or_else(|| validation(format!("unknown sentence_id {}", sample.sentence_id)))?;
        if sample.segments.len() >= min_segments(sentence.word_count()) {
            kept.push(sample.clone());
        }
    }
    Ok(kept)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    pub fn sentence(id: &str, words: &[(&str, Pos)]) -> AnnotatedSentence {
        AnnotatedSentence {
            sentence_id: id.to_string(),
            task: Task::SR1,
            text: words.iter().map(|(w, _)| *w).collect::<Vec<_>>().join(" "),
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, (w, pos))| AnnotatedToken {
                    surface: w.to_string(),
                    lemma: w.to_lowercase(),
                    pos: *pos,
                    entity: EntityTag::None,
                    position: i,
                })
                .collect(),
        }
    }

    pub fn plain_sentence(id: &str, n_words: usize) -> AnnotatedSentence {
        let words: Vec<String> = (0..n_words).map(|i| format!("w{i}")).collect();
        let pairs: Vec<(&str, Pos)> = words.iter().map(|w| (w.as_str(), Pos::Noun)).collect();
        sentence(id, &pairs)
    }

    pub fn sample(sentence_id: &str, subject: &str, positions: &[usize], dim: usize) -> EegWordSequence {
        EegWordSequence {
            sentence_id: sentence_id.to_string(),
            subject_id: subject.to_string(),
            segments: positions
                .iter()
                .map(|&p| Segment {
                    position: p,
                    features: vec![p as f64; dim],
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    fn map(sentences: &[AnnotatedSentence]) -> HashMap<&str, &AnnotatedSentence> {
        sentences.iter().map(|s| (s.sentence_id.as_str(), s)).collect()
    }

    #[test]
    fn filter_boundaries() {
        let sents = vec![plain_sentence("ten", 10), plain_sentence("seven", 7)];
        let m = map(&sents);
        let samples = vec![
            sample("ten", "s1", &[0, 1, 2, 3, 4], 2),
            sample("ten", "s2", &[0, 1, 2, 3], 2),
            sample("seven", "s1", &[0, 2, 4, 6], 2),
            sample("seven", "s2", &[0, 2, 4], 2),
        ];
        let kept = filter_samples(&samples, &m).unwrap();
        let kept: Vec<(&str, &str)> = kept
            .iter()
            .map(|s| (s.sentence_id.as_str(), s.subject_id.as_str()))
            .collect();
        assert_eq!(kept, vec![("ten", "s1"), ("seven", "s1")]);
    }

    #[test]
    fn odd_lengths_match_hand_ceiling() {
        // ceil(n/2) by counting: the smallest k with 2k >= n
        for n in 0..50usize {
            let oracle = (0..=n).find(|k| 2 * k >= n).unwrap();
            assert_eq!(min_segments(n), oracle, "n = {n}");
        }
        assert_eq!(min_segments(7), 4);
    }

    #[test]
    fn filter_unknown_sentence_names_id() {
        let sents = vec![plain_sentence("a", 4)];
        let err = filter_samples(&[sample("ghost", "s1", &[0], 1)], &map(&sents)).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn corpus_validation() {
        let s = plain_sentence("a", 3);
        assert!(Corpus::new(vec![s.clone()], vec![sample("a", "x", &[0, 2], 4)], 4).is_ok());
        // wrong dim
        assert!(Corpus::new(vec![s.clone()], vec![sample("a", "x", &[0], 3)], 4).is_err());
        // non-increasing positions
        assert!(Corpus::new(vec![s.clone()], vec![sample("a", "x", &[1, 1], 4)], 4).is_err());
        // position past sentence end
        assert!(Corpus::new(vec![s.clone()], vec![sample("a", "x", &[3], 4)], 4).is_err());
        // duplicate sentence ids
        assert!(Corpus::new(vec![s.clone(), s.clone()], vec![], 4).is_err());
        let mut upper = s.clone();
        upper.tokens[0].lemma = "Big".into();
        assert!(Corpus::new(vec![upper], vec![], 4).is_err());
        let mut gap = s;
        gap.tokens[2].position = 5;
        assert!(Corpus::new(vec![gap], vec![], 4).is_err());
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(lens in proptest::collection::vec((1usize..12, 0usize..12), 1..20)) {
            let sents: Vec<AnnotatedSentence> = lens
                .iter()
                .enumerate()
                .map(|(i, (n, _))| plain_sentence(&format!("s{i}"), *n))
                .collect();
            let samples: Vec<EegWordSequence> = lens
                .iter()
                .enumerate()
                .map(|(i, (n, k))| {
                    let positions: Vec<usize> = (0..(*k).min(*n)).collect();
                    sample(&format!("s{i}"), "x", &positions, 1)
                })
                .collect();
            let m = map(&sents);
            let once = filter_samples(&samples, &m).unwrap();
            let twice = filter_samples(&once, &m).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
