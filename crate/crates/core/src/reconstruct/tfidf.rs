use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::corpus::AnnotatedSentence;
use crate::error::{validation, Result};

type Sparse = BTreeMap<String, f64>;

/// TF-IDF vectors over the content lemmas of one task's sentence pool.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    ids: Vec<String>,
    texts: Vec<String>,
    vectors: Vec<Sparse>,
    norms: Vec<f64>,
    idf: BTreeMap<String, f64>,
    n_docs: usize,
    sublinear_tf: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub index: usize,
    pub sentence_id: String,
    pub text: String,
    pub score: f64,
}

/// Content lemmas of a sentence: content POS and not a stop word.
pub fn content_lemmas<'a>(sentence: &'a AnnotatedSentence, stopwords: &BTreeSet<String>) -> Vec<&'a str> {
    sentence
        .tokens
        .iter()
        .filter(|t| t.pos.is_content() && !stopwords.contains(&t.lemma))
        .map(|t| t.lemma.as_str())
        .collect()
}

fn term_counts<'a>(terms: impl IntoIterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut counts = BTreeMap::new();
    for t in terms {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

fn norm(v: &Sparse) -> f64 {
    v.values().map(|x| x * x).sum::<f64>().sqrt()
}

impl RetrievalIndex {
    pub fn build(pool: &[&AnnotatedSentence], stopwords: &BTreeSet<String>) -> Result<Self> {
        Self::build_with(pool, stopwords, false)
    }

    /// `sublinear_tf` uses `1 + ln(tf)` instead of the raw count.
    pub fn build_with(pool: &[&AnnotatedSentence], stopwords: &BTreeSet<String>, sublinear_tf: bool) -> Result<Self> {
        if pool.is_empty() {
            return Err(validation("retrieval pool is empty"));
        }
        let mut seen = HashSet::new();
        for s in pool {
            if !seen.insert(s.sentence_id.as_str()) {
                return Err(validation(format!("duplicate pool sentence {}", s.sentence_id)));
            }
        }
        let docs: Vec<BTreeMap<&str, usize>> = pool
            .iter()
            .map(|s| term_counts(content_lemmas(s, stopwords)))
            .collect();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &docs {
            for t in d.keys() {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let n = pool.len();
        let idf: BTreeMap<String, f64> = df
            .iter()
            .map(|(t, &c)| (t.to_string(), smooth_idf(n, c)))
            .collect();
        let mut index = RetrievalIndex {
            ids: pool.iter().map(|s| s.sentence_id.clone()).collect(),
            texts: pool.iter().map(|s| s.text.clone()).collect(),
            vectors: Vec::with_capacity(n),
            norms: Vec::with_capacity(n),
            idf,
            n_docs: n,
            sublinear_tf,
        };
        for d in docs {
            let v = index.weigh(&d);
            index.norms.push(norm(&v));
            index.vectors.push(v);
        }
        Ok(index)
    }

    fn tf(&self, count: usize) -> f64 {
        if self.sublinear_tf {
            1.0 + (count as f64).ln()
        } else {
            count as f64
        }
    }

    /// idf of a term; terms absent from the pool get the df = 0 value.
    pub fn idf(&self, term: &str) -> f64 {
        self.idf.get(term).copied().unwrap_or_else(|| smooth_idf(self.n_docs, 0))
    }

    fn weigh(&self, counts: &BTreeMap<&str, usize>) -> Sparse {
        counts
            .iter()
            .map(|(t, &c)| (t.to_string(), self.tf(c) * self.idf(t)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vector(&self, i: usize) -> &BTreeMap<String, f64> {
        &self.vectors[i]
    }

    pub fn sentence_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn text(&self, i: usize) -> &str {
        &self.texts[i]
    }

    pub fn position(&self, sentence_id: &str) -> Option<usize> {
        self.ids.iter().position(|id| id == sentence_id)
    }

    /// Multiplies every idf weight by `factor`; used to check that rankings
    /// do not depend on the idf scale.
    pub fn scale_idf(&mut self, factor: f64) {
        for v in self.idf.values_mut() {
            *v *= factor;
        }
        for (vec, n) in self.vectors.iter_mut().zip(&mut self.norms) {
            vec.values_mut().for_each(|w| *w *= factor);
            *n *= factor;
        }
    }

    /// Cosine similarity of the query bag to every pool sentence.
    pub fn scores(&self, query: &[&str]) -> Vec<f64> {
        let q = self.weigh(&term_counts(query.iter().copied()));
        let qn = norm(&q);
        self.vectors
            .iter()
            .zip(&self.norms)
            .map(|(d, &dn)| {
                if qn == 0.0 || dn == 0.0 {
                    return 0.0;
                }
                q.iter().filter_map(|(t, w)| d.get(t).map(|x| x * w)).sum::<f64>() / (qn * dn)
            })
            .collect()
    }

    /// Top `k` pool sentences by cosine to the anchor bag. Ties keep pool
    /// order; sentences without content words rank after all others.
    pub fn retrieve<S: AsRef<str>>(&self, anchors: &[S], k: usize) -> Vec<Retrieved> {
        if k == 0 {
            return Vec::new();
        }
        let query: Vec<&str> = anchors.iter().map(AsRef::as_ref).collect();
        let scores = self.scores(&query);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            let empty_a = self.norms[a] == 0.0;
            let empty_b = self.norms[b] == 0.0;
            empty_a
                .cmp(&empty_b)
                .then(scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal))
        });
        order
            .into_iter()
            .take(k)
            .map(|i| Retrieved {
                index: i,
                sentence_id: self.ids[i].clone(),
                text: self.texts[i].clone(),
                score: scores[i],
            })
            .collect()
    }
}

pub fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::sentence;
    use crate::corpus::Pos::*;

    fn pool() -> Vec<AnnotatedSentence> {
        vec![
            sentence("d1", &[("the", Other), ("film", Noun), ("film", Noun), ("win", Verb)]),
            sentence("d2", &[("actor", Noun), ("win", Verb), ("award", Noun)]),
            sentence("d3", &[("good", Adj), ("actor", Noun)]),
        ]
    }

    #[test]
    fn hand_computed_weights() {
        let p = pool();
        let refs: Vec<&AnnotatedSentence> = p.iter().collect();
        let idx = RetrievalIndex::build(&refs, &BTreeSet::new()).unwrap();
        let l = |x: f64| x.ln();
        // N = 3: film df 1, win df 2, actor df 2, award df 1, good df 1
        let film = l(4.0 / 2.0) + 1.0;
        let win = l(4.0 / 3.0) + 1.0;
        assert!((idx.vector(0)["film"] - 2.0 * film).abs() < 1e-12);
        assert!((idx.vector(0)["win"] - win).abs() < 1e-12);
        assert!(!idx.vector(0).contains_key("the"));
        assert!((idx.vector(1)["actor"] - win).abs() < 1e-12);
        assert_eq!(idx.vector(2).len(), 2);
    }

    #[test]
    fn retrieval_edge_cases() {
        let mut p = pool();
        p.push(sentence("d4", &[("the", Other), ("of", Other)]));
        let refs: Vec<&AnnotatedSentence> = p.iter().collect();
        let idx = RetrievalIndex::build(&refs, &BTreeSet::new()).unwrap();
        assert!(idx.retrieve(&["film"], 0).is_empty());
        assert_eq!(idx.retrieve(&["film"], 10).len(), 4);
        // empty document is last even though d3 also scores zero
        let r = idx.retrieve(&["film"], 4);
        assert_eq!(r[0].sentence_id, "d1");
        assert_eq!(r[3].sentence_id, "d4");
        // ties keep pool order
        let r = idx.retrieve(&["zebra"], 3);
        assert_eq!(r.iter().map(|x| x.sentence_id.as_str()).collect::<Vec<_>>(), ["d1", "d2", "d3"]);
    }

    #[test]
    fn rejects_empty_and_duplicate_pools() {
        assert!(RetrievalIndex::build(&[], &BTreeSet::new()).is_err());
        let p = pool();
        assert!(RetrievalIndex::build(&[&p[0], &p[0]], &BTreeSet::new()).is_err());
    }
}
