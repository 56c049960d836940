//! Fixed keyword vocabulary: candidate pool, diversity-aware core selection,
//! sentence coverage audit and budget-respecting pruning.

mod fps;
mod pool;
mod rules;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::AnnotatedSentence;
use crate::embedding::EmbeddingBank;
use crate::error::{config, validation, Error, Result};

pub use fps::{cosine_distance, farthest_point_sample, FpsItem, StartRule};
pub use pool::{build_candidate_pool, eligible_lemmas};
pub use rules::{roman_value, ExclusionRules};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Core,
    Refinement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub lemma: String,
    pub frequency: usize,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceCoverage {
    pub sentence_id: String,
    pub eligible: usize,
    pub covered: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyMeta {
    pub size_target: usize,
    pub seed: u64,
    pub min_freq: usize,
    pub reserve: usize,
    pub start_rule: String,
    pub core: usize,
    pub refinement: usize,
    pub pruned: Vec<String>,
    /// Entries above `size_target` that could not be pruned without breaking
    /// coverage. Non-zero means the budget is violated.
    pub overflow: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordVocabulary {
    pub meta: VocabularyMeta,
    pub entries: Vec<KeywordEntry>,
    pub audit: Vec<SentenceCoverage>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl KeywordVocabulary {
    pub fn new(meta: VocabularyMeta, entries: Vec<KeywordEntry>, audit: Vec<SentenceCoverage>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.lemma.clone(), i).is_some() {
                return Err(validation(format!("duplicate keyword {:?}", e.lemma)));
            }
        }
        Ok(KeywordVocabulary {
            meta,
            entries,
            audit,
            index,
        })
    }

    /// A vocabulary with no provenance (all entries core, frequency 0).
    pub fn from_lemmas<S: AsRef<str>>(lemmas: &[S]) -> Result<Self> {
        let entries: Vec<KeywordEntry> = lemmas
            .iter()
            .map(|l| KeywordEntry {
                lemma: l.as_ref().to_string(),
                frequency: 0,
                origin: Origin::Core,
            })
            .collect();
        let meta = VocabularyMeta {
            size_target: entries.len(),
            seed: 0,
            min_freq: 0,
            reserve: 0,
            start_rule: "external".into(),
            core: entries.len(),
            refinement: 0,
            pruned: Vec::new(),
            overflow: 0,
        };
        KeywordVocabulary::new(meta, entries, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lemmas(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.lemma.clone()).collect()
    }

    pub fn lemma(&self, id: usize) -> &str {
        &self.entries[id].lemma
    }

    pub fn id_of(&self, lemma: &str) -> Option<usize> {
        self.index.get(lemma).copied()
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.index.contains_key(lemma)
    }

    /// SHA-256 over the newline-joined lemma list.
    pub fn hash(&self) -> String {
        vocab_hash(&self.lemmas())
    }

    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut out = String::from("# anchorlab keyword vocabulary\n");
        let _ = writeln!(out, "# size_target={}", m.size_target);
        let _ = writeln!(out, "# seed={}", m.seed);
        let _ = writeln!(out, "# min_freq={}", m.min_freq);
        let _ = writeln!(out, "# reserve={}", m.reserve);
        let _ = writeln!(out, "# start_rule={}", m.start_rule);
        let _ = writeln!(
            out,
            "# core={} refinement={} pruned={} overflow={}",
            m.core,
            m.refinement,
            m.pruned.len(),
            m.overflow
        );
        for e in &self.entries {
            out.push_str(&e.lemma);
            out.push('\n');
        }
        out
    }

    /// Parses the text format; provenance beyond the lemma list is only
    /// available from the audit JSON.
    pub fn from_text(text: &str) -> Result<Self> {
        let lemmas: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let mut vocab = KeywordVocabulary::from_lemmas(&lemmas)?;
        for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
            for field in line.split_whitespace() {
                if let Some((key, value)) = field.split_once('=') {
                    let num = value.parse::<usize>().ok();
                    match (key, num) {
                        ("size_target", Some(v)) => vocab.meta.size_target = v,
                        ("seed", Some(v)) => vocab.meta.seed = v as u64,
                        ("min_freq", Some(v)) => vocab.meta.min_freq = v,
                        ("reserve", Some(v)) => vocab.meta.reserve = v,
                        ("core", Some(v)) => vocab.meta.core = v,
                        ("refinement", Some(v)) => vocab.meta.refinement = v,
                        ("overflow", Some(v)) => vocab.meta.overflow = v,
                        ("start_rule", _) => vocab.meta.start_rule = value.to_string(),
                        _ => {}
                    }
                }
            }
        }
        Ok(vocab)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Writes `<stem>.txt` and `<stem>.audit.json` style pair: `path` and
    /// `audit_path`.
    pub fn save(&self, path: impl AsRef<Path>, audit_path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))?;
        let audit_path = audit_path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(audit_path, json + "\n").map_err(|e| Error::io(audit_path, e))
    }

    pub fn load_audit(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: KeywordVocabulary = serde_json::from_str(&text)?;
        KeywordVocabulary::new(v.meta, v.entries, v.audit)
    }
}

pub fn vocab_hash<S: AsRef<str>>(lemmas: &[S]) -> String {
    let mut h = Sha256::new();
    for (i, l) in lemmas.iter().enumerate() {
        if i > 0 {
            h.update(b"\n");
        }
        h.update(l.as_ref().as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabParams {
    pub size: usize,
    pub min_freq: usize,
    /// Fraction of `size` held back from the core for coverage refinement.
    pub reserve_fraction: f64,
    pub seed: u64,
    pub start_rule: StartRule,
    /// Optional lemma → lexical root map; only the most frequent lemma of
    /// each root enters the core.
    #[serde(default)]
    pub root_map: BTreeMap<String, String>,
}

impl Default for VocabParams {
    fn default() -> Self {
        VocabParams {
            size: 100,
            min_freq: 5,
            reserve_fraction: 0.2,
            seed: 0,
            start_rule: StartRule::HighestFrequency,
            root_map: BTreeMap::new(),
        }
    }
}

impl VocabParams {
    pub fn reserve(&self) -> usize {
        ((self.size as f64) * self.reserve_fraction).round() as usize
    }
}

/// Parses a root-map file: `lemma<whitespace>root` per line.
pub fn parse_root_map(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(lemma), Some(root), None) => {
                map.insert(lemma.to_lowercase(), root.to_lowercase());
            }
            _ => return Err(validation(format!("root map line {}: expected `lemma root`", i + 1))),
        }
    }
    Ok(map)
}

/// Coverage audit of `core` over the corpus, queue-based refinement, then
/// pruning back to `budget` where coverage allows.
///
/// A sentence with `e` eligible lemmas needs `min(e, 2)` of them covered.
pub fn audit_and_refine(
    core: &[String],
    sentences: &[AnnotatedSentence],
    rules: &ExclusionRules,
    frequencies: &BTreeMap<String, usize>,
    budget: usize,
    vectors: Option<&EmbeddingBank>,
) -> Result<(Vec<KeywordEntry>, Vec<SentenceCoverage>, Vec<String>, usize)> {
    let eligible: Vec<Vec<String>> = sentences.iter().map(|s| eligible_lemmas(s, rules)).collect();
    let core_set: HashSet<&str> = core.iter().map(String::as_str).collect();

    let mut queue: Vec<String> = Vec::new();
    let push = |lemma: &String, queue: &mut Vec<String>| {
        if !core_set.contains(lemma.as_str()) && !queue.contains(lemma) {
            queue.push(lemma.clone());
        }
    };
    for words in &eligible {
        let covered = words.iter().filter(|w| core_set.contains(w.as_str())).count();
        if words.len() < 2 {
            words.iter().for_each(|w| push(w, &mut queue));
        } else if covered == 0 {
            words.iter().take(2).for_each(|w| push(w, &mut queue));
        } else if covered == 1 {
            if let Some(w) = words.iter().find(|w| !core_set.contains(w.as_str())) {
                push(w, &mut queue);
            }
        }
    }

    let freq = |l: &str| frequencies.get(l).copied().unwrap_or(0);
    let mut entries: Vec<KeywordEntry> = core
        .iter()
        .map(|l| KeywordEntry {
            lemma: l.clone(),
            frequency: freq(l),
            origin: Origin::Core,
        })
        .chain(queue.iter().map(|l| KeywordEntry {
            lemma: l.clone(),
            frequency: freq(l),
            origin: Origin::Refinement,
        }))
        .collect();

    // coverage bookkeeping: sentences touching each lemma, covered counts
    let mut touching: HashMap<&str, Vec<usize>> = HashMap::new();
    for (si, words) in eligible.iter().enumerate() {
        for w in words {
            touching.entry(w.as_str()).or_default().push(si);
        }
    }
    let required: Vec<usize> = eligible.iter().map(|w| w.len().min(2)).collect();
    let mut covered: Vec<usize> = {
        let in_vocab: HashSet<&str> = entries.iter().map(|e| e.lemma.as_str()).collect();
        eligible
            .iter()
            .map(|ws| ws.iter().filter(|w| in_vocab.contains(w.as_str())).count())
            .collect()
    };

    let mut pruned = Vec::new();
    while entries.len() > budget {
        let removable = |e: &KeywordEntry| {
            touching
                .get(e.lemma.as_str())
                .map(|ss| ss.iter().all(|&s| covered[s] > required[s]))
                .unwrap_or(true)
        };
        let redundancy = |i: usize| -> f64 {
            let Some(bank) = vectors else { return f64::INFINITY };
            let Some(v) = bank.get(&entries[i].lemma) else { return f64::INFINITY };
            entries
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .filter_map(|(_, e)| bank.get(&e.lemma))
                .map(|u| cosine_distance(v, u))
                .fold(f64::INFINITY, f64::min)
        };
        let victim = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| removable(e))
            .map(|(i, e)| (i, e.frequency, redundancy(i)))
            .min_by(|a, b| {
                a.1.cmp(&b.1)
                    .then(a.2.total_cmp(&b.2))
                    .then_with(|| entries[a.0].lemma.cmp(&entries[b.0].lemma))
            });
        let Some((i, _, _)) = victim else { break };
        let removed = entries.remove(i);
        if let Some(ss) = touching.get(removed.lemma.as_str()) {
            for &s in ss {
                covered[s] -= 1;
            }
        }
        pruned.push(removed.lemma);
    }
    let overflow = entries.len().saturating_sub(budget);
    if overflow > 0 {
        warn!("vocabulary exceeds budget {budget} by {overflow}: remaining entries are needed for coverage");
    }

    let audit = sentences
        .iter()
        .zip(&eligible)
        .zip(&covered)
        .map(|((s, e), c)| SentenceCoverage {
            sentence_id: s.sentence_id.clone(),
            eligible: e.len(),
            covered: *c,
        })
        .collect();
    Ok((entries, audit, pruned, overflow))
}

/// Full vocabulary construction: candidate pool, frequency threshold,
/// farthest-point core over `word_bank`, coverage refinement and pruning.
pub fn build_vocabulary(
    sentences: &[AnnotatedSentence],
    word_bank: &EmbeddingBank,
    rules: &ExclusionRules,
    params: &VocabParams,
) -> Result<KeywordVocabulary> {
    if params.size < 2 {
        return Err(config("vocabulary size must be at least 2"));
    }
    let pool = build_candidate_pool(sentences, rules)?;
    let mut thresholded: Vec<(&String, usize)> = pool
        .iter()
        .filter(|(_, f)| **f >= params.min_freq)
        .map(|(l, f)| (l, *f))
        .collect();

    if !params.root_map.is_empty() {
        let mut best_by_root: BTreeMap<&str, (&String, usize)> = BTreeMap::new();
        for &(lemma, f) in &thresholded {
            let root = params.root_map.get(lemma).map(String::as_str).unwrap_or(lemma);
            let slot = best_by_root.entry(root).or_insert((lemma, f));
            if f > slot.1 || (f == slot.1 && lemma < slot.0) {
                *slot = (lemma, f);
            }
        }
        let keep: HashSet<&String> = best_by_root.values().map(|(l, _)| *l).collect();
        thresholded.retain(|(l, _)| keep.contains(l));
    }

    if thresholded.len() < params.size {
        return Err(config(format!(
            "only {} candidate lemmas reach min_freq={}, fewer than the target size {}; lower min_freq",
            thresholded.len(),
            params.min_freq,
            params.size
        )));
    }

    let unit_bank = word_bank.normalized()?;
    let (embedded, missing): (Vec<_>, Vec<_>) = thresholded.iter().partition(|(l, _)| unit_bank.contains(l));
    if !missing.is_empty() {
        warn!(
            "{} candidate lemmas missing from the word bank, dropped from core selection: {:?}",
            missing.len(),
            missing.iter().take(10).map(|(l, _)| l.as_str()).collect::<Vec<_>>()
        );
    }
    if (embedded.len() as f64) < 0.9 * thresholded.len() as f64 {
        return Err(config(format!(
            "word bank covers {} of {} candidate lemmas (< 90%)",
            embedded.len(),
            thresholded.len()
        )));
    }

    let reserve = params.reserve();
    let core_size = params.size.saturating_sub(reserve).min(embedded.len());
    let items: Vec<FpsItem> = embedded
        .iter()
        .map(|(l, f)| FpsItem {
            lemma: l,
            frequency: *f,
            vector: unit_bank.get(l).unwrap(),
        })
        .collect();
    let picked = farthest_point_sample(&items, core_size, &params.start_rule)?;
    let core: Vec<String> = picked.iter().map(|&i| items[i].lemma.to_string()).collect();

    let (entries, audit, pruned, overflow) =
        audit_and_refine(&core, sentences, rules, &pool, params.size, Some(&unit_bank))?;
    let meta = VocabularyMeta {
        size_target: params.size,
        seed: params.seed,
        min_freq: params.min_freq,
        reserve,
        start_rule: params.start_rule.label(),
        core: entries.iter().filter(|e| e.origin == Origin::Core).count(),
        refinement: entries.iter().filter(|e| e.origin == Origin::Refinement).count(),
        pruned,
        overflow,
    };
    KeywordVocabulary::new(meta, entries, audit)
}

/// Re-runs the coverage audit of a finished vocabulary: per sentence
/// (eligible, covered) counts.
pub fn reaudit(
    vocab: &KeywordVocabulary,
    sentences: &[AnnotatedSentence],
    rules: &ExclusionRules,
) -> Vec<SentenceCoverage> {
    sentences
        .iter()
        .map(|s| {
            let e = eligible_lemmas(s, rules);
            SentenceCoverage {
                sentence_id: s.sentence_id.clone(),
                eligible: e.len(),
                covered: e.iter().filter(|w| vocab.contains(w)).count(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::sentence;
    use crate::corpus::Pos;

    fn nouns(id: &str, words: &[&str]) -> AnnotatedSentence {
        let pairs: Vec<(&str, Pos)> = words.iter().map(|w| (*w, Pos::Noun)).collect();
        sentence(id, &pairs)
    }

    fn run(core: &[&str], sents: &[AnnotatedSentence], budget: usize) -> (Vec<String>, Vec<SentenceCoverage>, Vec<String>, usize) {
        let rules = ExclusionRules::empty();
        let pool = build_candidate_pool(sents, &rules).unwrap();
        let core: Vec<String> = core.iter().map(|s| s.to_string()).collect();
        let (entries, audit, pruned, overflow) = audit_and_refine(&core, sents, &rules, &pool, budget, None).unwrap();
        (entries.into_iter().map(|e| e.lemma).collect(), audit, pruned, overflow)
    }

    #[test]
    fn uncovered_sentence_contributes_two() {
        let sents = vec![nouns("a", &["cat", "dog"]), nouns("b", &["alpha", "beta", "gamma"])];
        let (vocab, audit, _, _) = run(&["cat", "dog"], &sents, 10);
        assert_eq!(vocab, vec!["cat", "dog", "alpha", "beta"]);
        assert_eq!(audit[1].covered, 2);
    }

    #[test]
    fn single_covered_adds_earliest_uncovered() {
        let sents = vec![nouns("a", &["x", "cat", "y"])];
        let (vocab, audit, _, _) = run(&["cat"], &sents, 10);
        assert_eq!(vocab, vec!["cat", "x"]);
        assert_eq!(audit[0].covered, 2);
    }

    #[test]
    fn single_eligible_word_retained() {
        let sents = vec![nouns("a", &["lonely"]), nouns("b", &["cat", "dog"])];
        let (vocab, audit, _, overflow) = run(&["cat", "dog"], &sents, 10);
        assert!(vocab.contains(&"lonely".to_string()));
        assert_eq!((audit[0].eligible, audit[0].covered), (1, 1));
        assert_eq!(overflow, 0);
    }

    #[test]
    fn pruning_prefers_low_frequency_and_respects_coverage() {
        // "rare" is only needed once and the sentence keeps 2 others.
        let sents = vec![
            nouns("a", &["cat", "dog", "rare"]),
            nouns("b", &["cat", "dog"]),
            nouns("c", &["cat", "dog", "common"]),
            nouns("d", &["common", "cat"]),
        ];
        let (vocab, _, pruned, overflow) = run(&["cat", "dog", "rare", "common"], &sents, 3);
        assert_eq!(pruned, vec!["rare"]);
        assert_eq!(vocab, vec!["cat", "dog", "common"]);
        assert_eq!(overflow, 0);
        // budget 2 is unreachable: every remaining word is load-bearing
        let (vocab, _, _, overflow) = run(&["cat", "dog", "rare", "common"], &sents, 2);
        assert_eq!(vocab.len(), 3);
        assert_eq!(overflow, 1);
    }

    #[test]
    fn redundancy_breaks_frequency_ties() {
        let bank = EmbeddingBank::from_rows(
            3,
            vec![
                ("a", vec![1.0, 0.0, 0.0]),
                ("b", vec![0.0, 1.0, 0.0]),
                ("near", vec![0.99, 0.141, 0.0]),
                ("far", vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap()
        .normalized()
        .unwrap();
        let sents = vec![nouns("s", &["a", "b", "near", "far"])];
        let rules = ExclusionRules::empty();
        let pool = build_candidate_pool(&sents, &rules).unwrap();
        let core: Vec<String> = ["a", "b", "near", "far"].iter().map(|s| s.to_string()).collect();
        let (_, _, pruned, _) = audit_and_refine(&core, &sents, &rules, &pool, 3, Some(&bank)).unwrap();
        // a and near are the closest pair; "a" < "near" lexicographically breaks that tie
        assert_eq!(pruned, vec!["a"]);
    }

    #[test]
    fn text_round_trip_and_hash() {
        let v = KeywordVocabulary::from_lemmas(&["film", "good"]).unwrap();
        let back = KeywordVocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back.lemmas(), v.lemmas());
        assert_eq!(back.hash(), v.hash());
        assert_eq!(back.meta, v.meta);
        assert!(KeywordVocabulary::from_lemmas(&["a", "a"]).is_err());
    }

    #[test]
    fn root_map_parses() {
        let m = parse_root_map("# c\ndecide decide\ndecision decide\n").unwrap();
        assert_eq!(m["decision"], "decide");
        assert!(parse_root_map("one\n").is_err());
    }
}
