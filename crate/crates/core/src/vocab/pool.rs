use std::collections::{BTreeMap, HashSet};

use super::ExclusionRules;
use crate::corpus::AnnotatedSentence;
use crate::error::{validation, Result};

/// Distinct eligible lemmas of a sentence, in reading order.
pub fn eligible_lemmas(sentence: &AnnotatedSentence, rules: &ExclusionRules) -> Vec<String> {
    let mut seen = HashSet::new();
    sentence
        .tokens
        .iter()
        .filter(|t| rules.is_eligible(t))
        .filter(|t| seen.insert(t.lemma.as_str()))
        .map(|t| t.lemma.clone())
        .collect()
}

/// Lemma → number of sentences containing it (repeats inside one sentence
/// count once).
pub fn build_candidate_pool(
    sentences: &[AnnotatedSentence],
    rules: &ExclusionRules,
) -> Result<BTreeMap<String, usize>> {
    if sentences.is_empty() {
        return Err(validation("cannot build a candidate pool from an empty corpus"));
    }
    let mut pool = BTreeMap::new();
    for sentence in sentences {
        for lemma in eligible_lemmas(sentence, rules) {
            *pool.entry(lemma).or_insert(0) += 1;
        }
    }
    Ok(pool)
}
