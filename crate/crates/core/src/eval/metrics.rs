use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedSentence;
use crate::embedding::{cosine, EmbeddingBank};
use crate::error::{validation, Result};

/// Lowercase, replace punctuation with spaces, split on whitespace.
/// Apostrophes inside words are kept ("don't").
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .map(|t| t.trim_matches('\'').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorScore {
    pub hit_fraction: f64,
    pub all_grounded: bool,
}

/// Share of anchors whose lemma occurs among the sentence lemmas.
pub fn anchor_metrics<S: AsRef<str>>(anchors: &[S], sentence: &AnnotatedSentence) -> AnchorScore {
    if anchors.is_empty() {
        return AnchorScore {
            hit_fraction: 0.0,
            all_grounded: false,
        };
    }
    let lemmas: HashSet<&str> = sentence.lemmas().collect();
    let hits = anchors.iter().filter(|a| lemmas.contains(a.as_ref())).count();
    AnchorScore {
        hit_fraction: hits as f64 / anchors.len() as f64,
        all_grounded: hits == anchors.len(),
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped n-gram matches and hypothesis n-gram count.
fn clipped(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let h = ngrams(hyp, n);
    let r = ngrams(reference, n);
    let matched = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

/// Modified n-gram precision for n = 1..=`max_n` (no brevity penalty).
pub fn ngram_precisions(hyp: &[String], reference: &[String], max_n: usize) -> Vec<f64> {
    (1..=max_n)
        .map(|n| {
            let (m, total) = clipped(hyp, reference, n);
            if total == 0 {
                0.0
            } else {
                m as f64 / total as f64
            }
        })
        .collect()
}

/// Sentence BLEU-1..=`max_n` with uniform weights. Without smoothing, any
/// zero precision up to order n makes BLEU-n zero; `epsilon` (if given)
/// replaces zero match counts.
pub fn bleu(hyp: &[String], reference: &[String], max_n: usize, epsilon: Option<f64>) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(validation("BLEU needs a non-empty reference"));
    }
    if hyp.is_empty() {
        return Ok(vec![0.0; max_n]);
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    let mut log_sum = 0.0;
    let mut zero = false;
    let mut out = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let (m, total) = clipped(hyp, reference, n);
        let p = match (total, epsilon) {
            (0, _) => 0.0,
            (_, Some(eps)) if m == 0 => eps / total as f64,
            _ => m as f64 / total as f64,
        };
        if p == 0.0 {
            zero = true;
        } else {
            log_sum += p.ln();
        }
        out.push(if zero { 0.0 } else { bp * (log_sum / n as f64).exp() });
    }
    Ok(out)
}

/// Unigram-overlap F1 with clipped counts.
pub fn rouge1_f1(hyp: &[String], reference: &[String]) -> f64 {
    let (m, _) = clipped(hyp, reference, 1);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyMatch {
    /// `None` when either side has no in-bank token.
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub skipped: usize,
}

/// Greedy max-cosine token matching over static word vectors. A rough
/// stand-in for contextual similarity scores and not comparable to them.
pub fn embedding_greedy_f1(hyp: &[String], reference: &[String], bank: &EmbeddingBank) -> GreedyMatch {
    let lookup = |toks: &[String]| -> (Vec<&[f64]>, usize) {
        let found: Vec<&[f64]> = toks.iter().filter_map(|t| bank.get(t)).collect();
        let skipped = toks.len() - found.len();
        (found, skipped)
    };
    let (h, sh) = lookup(hyp);
    let (r, sr) = lookup(reference);
    let skipped = sh + sr;
    if h.is_empty() || r.is_empty() {
        return GreedyMatch {
            f1: None,
            precision: None,
            recall: None,
            skipped,
        };
    }
    let best = |from: &[&[f64]], to: &[&[f64]]| {
        from.iter()
            .map(|a| to.iter().map(|b| cosine(a, b)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    let p = best(&h, &r);
    let rc = best(&r, &h);
    let f1 = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
    GreedyMatch {
        f1: Some(f1),
        precision: Some(p),
        recall: Some(rc),
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::sentence;
    use crate::corpus::Pos::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenization() {
        assert_eq!(t("The cat, sat!  Don't."), ["the", "cat", "sat", "don't"]);
    }

    #[test]
    fn anchor_grounding() {
        let s = sentence("x", &[("the", Other), ("film", Noun), ("be", Verb), ("very", Other), ("good", Adj)]);
        assert_eq!(anchor_metrics(&["film", "good"], &s), AnchorScore { hit_fraction: 1.0, all_grounded: true });
        assert_eq!(anchor_metrics(&["film", "bad"], &s), AnchorScore { hit_fraction: 0.5, all_grounded: false });
        let none: [&str; 0] = [];
        assert_eq!(anchor_metrics(&none, &s), AnchorScore { hit_fraction: 0.0, all_grounded: false });
    }

    #[test]
    fn bleu_examples() {
        let b = bleu(&t("the cat sat"), &t("the cat sat down"), 3, None).unwrap();
        assert!((b[0] - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
        assert!((b[0] - 0.7165).abs() < 1e-4);
        let same = bleu(&t("a b c d"), &t("a b c d"), 3, None).unwrap();
        assert_eq!(same, vec![1.0, 1.0, 1.0]);
        assert_eq!(bleu(&[], &t("a"), 2, None).unwrap(), vec![0.0, 0.0]);
        assert!(bleu(&t("a"), &[], 2, None).is_err());
        // zero bigram matches: BLEU-2 is 0 unless smoothed
        let b = bleu(&t("a x b"), &t("a b"), 2, None).unwrap();
        assert_eq!(b[1], 0.0);
        assert!(bleu(&t("a x b"), &t("a b"), 2, Some(0.1)).unwrap()[1] > 0.0);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge1_f1(&t("a b"), &t("b c")), 0.5);
        assert_eq!(rouge1_f1(&t("x y"), &t("x y")), 1.0);
        assert_eq!(rouge1_f1(&t("x"), &t("y")), 0.0);
        assert_eq!(rouge1_f1(&[], &[]), 0.0);
    }

    #[test]
    fn greedy_examples() {
        let bank = EmbeddingBank::from_rows(
            2,
            vec![("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0]), ("c", vec![0.6, 0.8])],
        )
        .unwrap();
        assert_eq!(embedding_greedy_f1(&t("a b"), &t("a b"), &bank).f1, Some(1.0));
        assert_eq!(embedding_greedy_f1(&t("a"), &t("b"), &bank).f1, Some(0.0));
        let none = embedding_greedy_f1(&t("zz"), &t("a"), &bank);
        assert_eq!((none.f1, none.skipped), (None, 1));
    }
}
