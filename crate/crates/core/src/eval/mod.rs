//! Metrics, retrieval accuracy, statistics and the condition suite.

mod metrics;
mod permutation;
mod retrieval;
mod stats;
mod suite;

pub use metrics::{
    anchor_metrics, bleu, embedding_greedy_f1, ngram_precisions, rouge1_f1, tokenize, AnchorScore, GreedyMatch,
};
pub use permutation::{permutation_test, PermutationResult, MIN_PERMUTATIONS, MIN_SENTENCES};
pub use retrieval::{
    retrieval_accuracy, IdfWordEmbedder, RankTable, RemoteEmbedder, RetrievalResult, SentenceBankEmbedder,
    SentenceEmbedder, DEFAULT_KS,
};
pub use stats::{bonferroni, bonferroni_all, paired_t, rm_anova, two_by_two, TestResult};
pub use suite::{
    condition_anchors, oracle_anchors, random_anchors, run_condition_suite, CellResult, ChanceRow, ConditionKind,
    EvalReport, MetricRow, RecordScores, RecoveryRow, ReportConfig, SuiteInputs, score_records, SCHEMA_VERSION,
};
