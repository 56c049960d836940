use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, EegWordSequence};
use crate::error::{config, Result};

/// Name of the PRNG used for every seeded draw in this crate.
pub const PRNG_NAME: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    BySentence,
    LeaveOneSubjectOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub ratios: [f64; 3],
    pub seed: u64,
    #[serde(default)]
    pub held_out_subject: Option<String>,
    #[serde(default)]
    pub val_subject: Option<String>,
    #[serde(default = "default_prng")]
    pub prng: String,
}

fn default_prng() -> String {
    PRNG_NAME.to_string()
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            mode: SplitMode::BySentence,
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
            held_out_subject: None,
            val_subject: None,
            prng: default_prng(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Val,
    Test,
}

/// Split manifest. In by-sentence mode the subject lists are empty; in
/// leave-one-subject-out mode the sentence lists hold every sentence read by
/// the subjects of that part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub spec: SplitSpec,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_subjects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_subject: Option<String>,
}

impl Split {
    pub fn part_of(&self, sample: &EegWordSequence) -> Option<Part> {
        match self.spec.mode {
            SplitMode::BySentence => {
                let id = &sample.sentence_id;
                if self.train.contains(id) {
                    Some(Part::Train)
                } else if self.val.contains(id) {
                    Some(Part::Val)
                } else if self.test.contains(id) {
                    Some(Part::Test)
                } else {
                    None
                }
            }
            SplitMode::LeaveOneSubjectOut => {
                let subj = Some(&sample.subject_id);
                if self.test_subject.as_ref() == subj {
                    Some(Part::Test)
                } else if self.val_subject.as_ref() == subj {
                    Some(Part::Val)
                } else if self.train_subjects.contains(&sample.subject_id) {
                    Some(Part::Train)
                } else {
                    None
                }
            }
        }
    }

    /// Samples of `corpus` falling in `part`, in corpus order.
    pub fn samples<'a>(&self, corpus: &'a Corpus, part: Part) -> Vec<&'a EegWordSequence> {
        let wanted: HashSet<&str> = match (self.spec.mode, part) {
            (SplitMode::BySentence, Part::Train) => self.train.iter().map(String::as_str).collect(),
            (SplitMode::BySentence, Part::Val) => self.val.iter().map(String::as_str).collect(),
            (SplitMode::BySentence, Part::Test) => self.test.iter().map(String::as_str).collect(),
            _ => HashSet::new(),
        };
        corpus
            .samples()
            .iter()
            .filter(|s| match self.spec.mode {
                SplitMode::BySentence => wanted.contains(s.sentence_id.as_str()),
                SplitMode::LeaveOneSubjectOut => self.part_of(s) == Some(part),
            })
            .collect()
    }
}

fn check_ratios(r: &[f64; 3]) -> Result<()> {
    if r.iter().any(|x| !(0.0..=1.0).contains(x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(config(format!("split ratios {r:?} must be in [0,1] and sum to 1")));
    }
    Ok(())
}

/// Partitions a corpus according to `spec`. Deterministic under `spec.seed`.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<Split> {
    check_ratios(&spec.ratios)?;
    if spec.prng != PRNG_NAME {
        return Err(config(format!("unknown prng {:?}, only {PRNG_NAME} is available", spec.prng)));
    }
    match spec.mode {
        SplitMode::BySentence => by_sentence(corpus, spec),
        SplitMode::LeaveOneSubjectOut => {
            let subjects = corpus.subjects();
            if subjects.len() < 3 {
                return Err(config(format!(
                    "leave-one-subject-out needs at least 3 subjects, corpus has {}",
                    subjects.len()
                )));
            }
            let test = spec
                .held_out_subject
                .clone()
                .ok_or_else(|| config("leave-one-subject-out needs held_out_subject"))?;
            loso_fold(corpus, spec, &subjects, &test)
        }
    }
}

fn by_sentence(corpus: &Corpus, spec: &SplitSpec) -> Result<Split> {
    let mut ids: Vec<String> = corpus.sentences().iter().map(|s| s.sentence_id.clone()).collect();
    if ids.len() < 10 {
        return Err(config(format!(
            "by-sentence split needs at least 10 sentences, corpus has {}",
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);
    let n = ids.len() as f64;
    let n_train = (spec.ratios[0] * n).round() as usize;
    let n_val = ((spec.ratios[1] * n).round() as usize).min(ids.len() - n_train);
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(Split {
        spec: spec.clone(),
        train: ids,
        val,
        test,
        train_subjects: Vec::new(),
        val_subject: None,
        test_subject: None,
    })
}

fn loso_fold(corpus: &Corpus, spec: &SplitSpec, subjects: &[String], test: &str) -> Result<Split> {
    let pos = subjects
        .iter()
        .position(|s| s == test)
        .ok_or_else(|| config(format!("held-out subject {test} not in corpus")))?;
    let val = match &spec.val_subject {
        Some(v) if v == test => return Err(config("validation subject equals held-out subject")),
        Some(v) if !subjects.contains(v) => return Err(config(format!("validation subject {v} not in corpus"))),
        Some(v) => v.clone(),
        None => subjects[(pos + 1) % subjects.len()].clone(),
    };
    let train_subjects: Vec<String> = subjects
        .iter()
        .filter(|s| s.as_str() != test && **s != val)
        .cloned()
        .collect();
    let sentences_of = |pred: &dyn Fn(&str) -> bool| -> Vec<String> {
        let mut seen = HashSet::new();
        corpus
            .samples()
            .iter()
            .filter(|s| pred(&s.subject_id))
            .filter(|s| seen.insert(s.sentence_id.clone()))
            .map(|s| s.sentence_id.clone())
            .collect()
    };
    let mut spec = spec.clone();
    spec.held_out_subject = Some(test.to_string());
    spec.val_subject = Some(val.clone());
    Ok(Split {
        train: sentences_of(&|s| train_subjects.iter().any(|t| t == s)),
        val: sentences_of(&|s| s == val),
        test: sentences_of(&|s| s == test),
        spec,
        train_subjects,
        val_subject: Some(val),
        test_subject: Some(test.to_string()),
    })
}

/// One fold per subject; the validation subject defaults to the next subject
/// in sorted order.
pub fn loso_folds(corpus: &Corpus, seed: u64) -> Result<Vec<Split>> {
    let subjects = corpus.subjects();
    if subjects.len() < 3 {
        return Err(config(format!(
            "leave-one-subject-out needs at least 3 subjects, corpus has {}",
            subjects.len()
        )));
    }
    let spec = SplitSpec {
        mode: SplitMode::LeaveOneSubjectOut,
        seed,
        ..SplitSpec::default()
    };
    subjects.iter().map(|s| loso_fold(corpus, &spec, &subjects, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::*;

    fn corpus(n_sent: usize, subjects: usize) -> Corpus {
        let sents: Vec<_> = (0..n_sent).map(|i| plain_sentence(&format!("s{i:03}"), 4)).collect();
        let samples = (0..n_sent)
            .flat_map(|i| (0..subjects).map(move |j| sample(&format!("s{i:03}"), &format!("p{j:02}"), &[0, 1], 2)))
            .collect();
        Corpus::new(sents, samples, 2).unwrap()
    }

    #[test]
    fn by_sentence_ratios_and_disjointness() {
        let c = corpus(100, 1);
        let spec = SplitSpec {
            seed: 7,
            ..Default::default()
        };
        let s = split(&c, &spec).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        let all: HashSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        assert_eq!(all.len(), 100);
        assert_eq!(split(&c, &spec).unwrap(), s);
        let other = split(&c, &SplitSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(other.test, s.test);
    }

    #[test]
    fn rejects_small_corpora_and_bad_ratios() {
        assert!(split(&corpus(9, 1), &SplitSpec::default()).is_err());
        let bad = SplitSpec {
            ratios: [0.8, 0.1, 0.2],
            ..Default::default()
        };
        assert!(split(&corpus(20, 1), &bad).is_err());
        assert!(loso_folds(&corpus(20, 2), 0).is_err());
    }

    #[test]
    fn loso_twelve_subjects() {
        let c = corpus(10, 12);
        let folds = loso_folds(&c, 0).unwrap();
        assert_eq!(folds.len(), 12);
        for fold in &folds {
            assert_eq!(fold.train_subjects.len(), 10);
            let test = fold.test_subject.as_ref().unwrap();
            let val = fold.val_subject.as_ref().unwrap();
            assert_ne!(test, val);
            for s in fold.samples(&c, Part::Train) {
                assert_ne!(&s.subject_id, test);
                assert_ne!(&s.subject_id, val);
            }
            assert_eq!(fold.samples(&c, Part::Test).len(), 10);
        }
    }

    #[test]
    fn manifest_json_has_arrays() {
        let s = split(&corpus(10, 1), &SplitSpec::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert!(v["train"].is_array() && v["val"].is_array() && v["test"].is_array());
        assert_eq!(v["spec"]["mode"], "by-sentence");
    }
}
