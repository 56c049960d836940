mod common;

use anchorlab::embedding::EmbeddingBank;
use anchorlab::eval::{
    bleu, bonferroni, bonferroni_all, embedding_greedy_f1, paired_t, retrieval_accuracy, rm_anova, rouge1_f1, tokenize,
    SentenceBankEmbedder, TestResult,
};
use common::t3_two_tailed_p;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-6
}

#[test]
fn bleu_hand_examples() {
    let b = bleu(&tokenize("the cat sat"), &tokenize("the cat sat down"), 1, None).unwrap();
    assert!(close(b[0], (1.0f64 - 4.0 / 3.0).exp()));

    // p1 = 5/6, p2 = 3/5, p3 = 1/4, equal lengths
    let b = bleu(&tokenize("the cat sat on the mat"), &tokenize("the cat is on the mat"), 3, None).unwrap();
    assert!(close(b[0], 5.0 / 6.0));
    assert!(close(b[1], 0.5f64.sqrt()));
    assert!(close(b[2], 0.5));

    let same = tokenize("a quick brown fox");
    assert_eq!(bleu(&same, &same, 3, None).unwrap(), vec![1.0; 3]);
    assert_eq!(bleu(&[], &same, 3, None).unwrap(), vec![0.0; 3]);
    assert!(bleu(&same, &[], 3, None).is_err());
}

#[test]
fn rouge_hand_examples() {
    assert!(close(rouge1_f1(&tokenize("a b"), &tokenize("b c")), 0.5));
    assert_eq!(rouge1_f1(&tokenize("x y"), &tokenize("x y")), 1.0);
    assert_eq!(rouge1_f1(&tokenize("x"), &tokenize("y")), 0.0);
}

#[test]
fn greedy_f1_three_token_bank() {
    let bank = EmbeddingBank::from_rows(2, vec![("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0]), ("c", vec![1.0, 1.0])]).unwrap();
    // P = (0 + 1/sqrt2) / 2, R = 1/sqrt2, F1 = sqrt2 / 3
    let g = embedding_greedy_f1(&tokenize("a c"), &tokenize("b"), &bank);
    assert!(close(g.precision.unwrap(), 2f64.sqrt() / 4.0));
    assert!(close(g.recall.unwrap(), 2f64.sqrt() / 2.0));
    assert!(close(g.f1.unwrap(), 2f64.sqrt() / 3.0));
    let g = embedding_greedy_f1(&tokenize("a zz"), &tokenize("qq"), &bank);
    assert_eq!((g.f1, g.skipped), (None, 2));
}

#[test]
fn paired_t_textbook() {
    // d = [-1, -1, -2, -3]: mean -1.75, sd^2 = 2.75 / 3
    let r = paired_t(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 5.0, 7.0]).unwrap();
    let t = -1.75 / ((2.75 / 3.0) / 4.0f64).sqrt();
    assert!(close(r.statistic, t));
    assert_eq!(r.df1, 3.0);
    assert!(close(r.p, t3_two_tailed_p(t)));
}

#[test]
fn rm_anova_hand_example() {
    // SS_cond = 98/9, SS_err = 16/9, df (2, 4) -> F = 12.25;
    // F(2, d2) survival is (1 + 2F/d2)^(-d2/2)
    let data = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 5.0], vec![3.0, 3.0, 6.0]];
    let r = rm_anova(&data).unwrap();
    assert!(close(r.statistic, 12.25));
    assert_eq!((r.df1, r.df2), (2.0, Some(4.0)));
    assert!(close(r.p, (1.0f64 + 2.0 * 12.25 / 4.0).powf(-2.0)));
    assert!(rm_anova(&data[..1]).is_err());
}

#[test]
fn bonferroni_hand_example() {
    assert!(close(bonferroni(0.03, 3), 0.09));
    let mut fam: Vec<TestResult> = [0.01, 0.2, 0.5]
        .iter()
        .map(|&p| TestResult { test: "x".into(), statistic: 0.0, df1: 1.0, df2: None, p, correction: None })
        .collect();
    bonferroni_all(&mut fam);
    for (r, want) in fam.iter().zip([0.03, 0.6, 1.0]) {
        assert!(close(r.p, want));
    }
}

#[test]
fn toy_pool_ranks_follow_brute_force_cosine() {
    let texts = ["s0", "s1", "s2", "s3", "s4", "s5"];
    let vecs: [[f64; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [0.9, 0.1, 0.0],
        [0.0, 1.0, 0.0],
        [0.5, 0.5, 0.5],
        [-1.0, 0.2, 0.0],
        [0.2, 0.0, 1.0],
    ];
    let queries: [(&str, [f64; 3]); 3] = [("q0", [1.0, 0.05, 0.0]), ("q1", [0.1, 0.2, 0.9]), ("q2", [0.0, 1.0, 0.1])];
    let mut rows: Vec<(&str, Vec<f64>)> = texts.iter().zip(vecs).map(|(t, v)| (*t, v.to_vec())).collect();
    rows.extend(queries.iter().map(|(q, v)| (*q, v.to_vec())));
    let embedder = SentenceBankEmbedder { bank: EmbeddingBank::from_rows(3, rows).unwrap() };
    let pool: Vec<(&str, &str)> = texts.iter().map(|t| (*t, *t)).collect();

    let cos = |a: &[f64; 3], b: &[f64; 3]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    for (q, qv) in &queries {
        for (gt, gv) in texts.iter().zip(&vecs) {
            let oracle = 1 + vecs.iter().filter(|v| cos(qv, v) > cos(qv, gv)).count();
            let r = retrieval_accuracy(&[(gt, q)], &pool, &embedder, &[1, 3, 5]).unwrap();
            assert_eq!(r.ranks[0], Some(oracle), "{q} -> {gt}");
            let acc = &r.accuracy;
            assert!(acc.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
