mod common;

use anchorlab::corpus::{read_dataset, write_dataset};
use anchorlab::eval::anchor_metrics;
use anchorlab::vocab::{build_vocabulary, farthest_point_sample, reaudit, ExclusionRules, FpsItem, KeywordVocabulary, StartRule};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn toy_corpus_loads_and_round_trips() {
    let corpus = toy_corpus();
    assert_eq!((corpus.sentences().len(), corpus.samples().len()), (6, 6));
    let mut buf = Vec::new();
    write_dataset(&corpus, &mut buf).unwrap();
    let (again, _) = read_dataset(&buf[..], "mem".as_ref(), TOY_FEATURE_DIM).unwrap();
    assert_eq!(again, corpus);
}

#[test]
fn toy_vocabulary_matches_hand_audit() {
    let corpus = toy_corpus();
    let rules = ExclusionRules::default();
    let vocab = build_vocabulary(corpus.sentences(), &toy_bank(), &rules, &toy_vocab_params()).unwrap();
    let expected = std::fs::read_to_string(fixture("toy_vocab_v5.txt")).unwrap();
    assert_eq!(vocab.to_text(), expected);
    assert_eq!(vocab.meta.pruned, vec!["actor".to_string()]);

    // every sentence with two eligible words keeps two covered
    for c in reaudit(&vocab, corpus.sentences(), &rules) {
        assert!(c.covered >= c.eligible.min(2), "{c:?}");
    }
    let reread = KeywordVocabulary::from_text(&expected).unwrap();
    assert_eq!(reread.lemmas(), vocab.lemmas());
}

#[test]
fn fps_matches_brute_force_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let vectors: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let names: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let items: Vec<FpsItem> = names
            .iter()
            .zip(&vectors)
            .map(|(n, v)| FpsItem { lemma: n, frequency: 1, vector: v })
            .collect();
        let start = trial % 10;
        let got = farthest_point_sample(&items, 4, &StartRule::Index(start)).unwrap();
        assert_eq!(got, fps_oracle(&vectors, 4, start), "trial {trial}");
    }
}

#[test]
fn decoded_fixture_anchor_metrics_match_oracle_script() {
    let corpus = toy_corpus();
    let decoded = toy_decoded();
    let expected = toy_decoded_expected();
    assert_eq!(decoded.len(), 20);
    for (seq, (hit, all)) in decoded.iter().zip(expected) {
        let s = corpus.sentence(&seq.sentence_id).unwrap();
        let got = anchor_metrics(&seq.lemmas(), s);
        assert!((got.hit_fraction - hit).abs() < 1e-6, "{}: {} vs {hit}", seq.sentence_id, got.hit_fraction);
        assert_eq!(got.all_grounded, all);
    }
}
