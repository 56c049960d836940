use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{anchor_metrics, bleu, embedding_greedy_f1, rouge1_f1, tokenize};
use super::retrieval::{RankTable, SentenceEmbedder};
use super::stats::{bonferroni_all, paired_t, rm_anova, TestResult};
use crate::aligner::AnchorSequence;
use crate::corpus::{AnnotatedSentence, Task};
use crate::embedding::EmbeddingBank;
use crate::error::{validation, Result};
use crate::reconstruct::{
    Backend, GenerationParams, Job, Mode, ReconstructionRecord, Reconstructor, RetrievalIndex, Template,
};
use crate::vocab::KeywordVocabulary;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    Random,
    Ordered,
    Oracle,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 3] = [ConditionKind::Random, ConditionKind::Ordered, ConditionKind::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::Random => "random",
            ConditionKind::Ordered => "ordered",
            ConditionKind::Oracle => "oracle",
        }
    }
}

/// First `m` distinct in-vocabulary content lemmas in reading order.
pub fn oracle_anchors(sentence: &AnnotatedSentence, vocab: &KeywordVocabulary, m: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    sentence
        .tokens
        .iter()
        .filter(|t| t.pos.is_content() && vocab.contains(&t.lemma))
        .filter(|t| seen.insert(t.lemma.as_str()))
        .take(m)
        .map(|t| t.lemma.clone())
        .collect()
}

/// `m` distinct keywords drawn uniformly (fewer if the vocabulary is smaller).
pub fn random_anchors(vocab: &KeywordVocabulary, m: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    sample(rng, vocab.len(), m.min(vocab.len()))
        .into_iter()
        .map(|i| vocab.lemma(i).to_string())
        .collect()
}

/// Condition-specific anchors for every decoded sample. Random anchors draw
/// from one stream per (m, sample) so they are stable across modes.
pub fn condition_anchors(
    kind: ConditionKind,
    decoded: &[AnchorSequence],
    sentences: &HashMap<&str, &AnnotatedSentence>,
    vocab: &KeywordVocabulary,
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    decoded
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            let sentence = sentences
                .get(seq.sentence_id.as_str())
                .ok_or_else(|| validation(format!("decoded sample refers to unknown sentence {}", seq.sentence_id)))?;
            Ok(match kind {
                ConditionKind::Ordered => seq.lemmas().into_iter().take(m).collect(),
                ConditionKind::Oracle => oracle_anchors(sentence, vocab, m),
                ConditionKind::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64) << 32);
                    rng.set_stream(i as u64);
                    random_anchors(vocab, m, &mut rng)
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub condition: ConditionKind,
    pub mode: Mode,
    pub m: usize,
    /// `None` for the pooled row.
    pub subject: Option<String>,
    pub n: usize,
    pub anchor_hit: f64,
    pub sentence_anchor_all: f64,
    pub topk: BTreeMap<usize, f64>,
    pub bleu: [f64; 3],
    pub rouge1_f1: f64,
    /// Mean over pairs where it is defined; `None` when it never is.
    pub greedy_f1: Option<f64>,
    /// Samples without anchors (reconstruction impossible; counted as misses).
    pub empty_anchor_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub mode: Mode,
    pub m: usize,
    pub random_top5: Option<f64>,
    pub ordered_top5: Option<f64>,
    pub oracle_top5: Option<f64>,
    pub delta_from_oracle: Option<f64>,
    pub recovery_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceRow {
    pub task: Task,
    pub pool_size: usize,
    pub topk: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub ms: Vec<usize>,
    pub ks: Vec<usize>,
    pub retrieval_k: usize,
    pub modes: Vec<Mode>,
    pub template_ids: BTreeMap<String, String>,
    pub embedder: String,
    pub generation: GenerationParams,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config: ReportConfig,
    pub chance: Vec<ChanceRow>,
    pub rows: Vec<MetricRow>,
    pub recovery: Vec<RecoveryRow>,
    pub statistics: Vec<TestResult>,
    /// Cells that could not be computed, with the reason.
    pub gaps: Vec<String>,
}

pub struct SuiteInputs<'a> {
    pub sentences: &'a [AnnotatedSentence],
    pub vocab: &'a KeywordVocabulary,
    /// Decoded sequences per m.
    pub decoded: &'a BTreeMap<usize, Vec<AnchorSequence>>,
    pub conditions: &'a [ConditionKind],
    pub modes: &'a [Mode],
    pub ks: &'a [usize],
    pub stopwords: &'a BTreeSet<String>,
    pub templates: BTreeMap<Mode, Template>,
    pub params: GenerationParams,
    pub retrieval_k: usize,
    pub seed: u64,
    pub embedder_name: String,
}

/// Output of one (condition, mode, m) cell.
pub struct CellResult {
    pub records: Vec<Option<ReconstructionRecord>>,
    pub ranks: Vec<Option<usize>>,
}

impl EvalReport {
    pub fn pooled(&self, condition: ConditionKind, mode: Mode, m: usize) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.subject.is_none() && r.condition == condition && r.mode == mode && r.m == m)
    }

    /// Top-k must never decrease with k.
    pub fn topk_monotone(&self) -> bool {
        self.rows.iter().all(|r| {
            let v: Vec<f64> = r.topk.values().copied().collect();
            v.windows(2).all(|w| w[0] <= w[1] + 1e-12)
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,mode,m,subject,n,anchor_hit,sentence_anchor_all");
        for k in &self.config.ks {
            let _ = write!(out, ",top{k}");
        }
        out.push_str(",bleu1,bleu2,bleu3,rouge1_f1,greedy_f1,empty_anchor_samples\n");
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{:.6},{:.6}",
                r.condition.as_str(),
                r.mode,
                r.m,
                r.subject.as_deref().unwrap_or("all"),
                r.n,
                r.anchor_hit,
                r.sentence_anchor_all
            );
            for k in &self.config.ks {
                let _ = write!(out, ",{:.6}", r.topk.get(k).copied().unwrap_or(f64::NAN));
            }
            let g = r.greedy_f1.map(|g| format!("{g:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                ",{:.6},{:.6},{:.6},{:.6},{g},{}",
                r.bleu[0], r.bleu[1], r.bleu[2], r.rouge1_f1, r.empty_anchor_samples
            );
        }
        out
    }

    /// Long-format curves: accuracy against k, and Top-5 against m.
    pub fn plot_data(&self) -> (String, String) {
        let mut by_k = String::from("condition,mode,m,k,accuracy\n");
        let mut by_m = String::from("condition,mode,m,top5\n");
        for r in self.rows.iter().filter(|r| r.subject.is_none()) {
            for (k, a) in &r.topk {
                let _ = writeln!(by_k, "{},{},{},{k},{a:.6}", r.condition.as_str(), r.mode, r.m);
            }
            if let Some(a) = r.topk.get(&5) {
                let _ = writeln!(by_m, "{},{},{},{a:.6}", r.condition.as_str(), r.mode, r.m);
            }
        }
        (by_k, by_m)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

struct TaskPool<'a> {
    index: RetrievalIndex,
    table_pool: Vec<(&'a str, &'a str)>,
    position: HashMap<&'a str, usize>,
}

pub fn run_condition_suite(
    inputs: &SuiteInputs,
    backend: &Backend,
    embedder: &dyn SentenceEmbedder,
    word_bank: Option<&EmbeddingBank>,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &AnnotatedSentence> =
        inputs.sentences.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
    let mut pools: BTreeMap<Task, TaskPool> = BTreeMap::new();
    let mut chance = Vec::new();
    let tasks: BTreeSet<Task> = inputs.sentences.iter().map(|s| s.task).collect();
    for task in tasks {
        let members: Vec<&AnnotatedSentence> = inputs.sentences.iter().filter(|s| s.task == task).collect();
        let index = RetrievalIndex::build(&members, inputs.stopwords)?;
        let n = members.len();
        chance.push(ChanceRow {
            task,
            pool_size: n,
            topk: inputs.ks.iter().map(|&k| (k, (k.min(n)) as f64 / n as f64)).collect(),
        });
        pools.insert(
            task,
            TaskPool {
                index,
                table_pool: members.iter().map(|s| (s.sentence_id.as_str(), s.text.as_str())).collect(),
                position: members.iter().enumerate().map(|(i, s)| (s.sentence_id.as_str(), i)).collect(),
            },
        );
    }

    let mut rows = Vec::new();
    let mut gaps: Vec<String> = ConditionKind::ALL
        .iter()
        .filter(|c| !inputs.conditions.contains(c))
        .map(|c| format!("condition {} not evaluated", c.as_str()))
        .collect();
    let mut subject_top5: BTreeMap<(Mode, usize), BTreeMap<ConditionKind, BTreeMap<String, f64>>> = BTreeMap::new();

    for (&m, decoded) in inputs.decoded {
        for &condition in inputs.conditions {
            let anchors = condition_anchors(condition, decoded, &by_id, inputs.vocab, m, inputs.seed)?;
            for &mode in inputs.modes {
                let cell = match run_cell(inputs, &pools, &by_id, decoded, &anchors, mode, backend, embedder) {
                    Ok(c) => c,
                    Err(e) => {
                        gaps.push(format!("{} / {mode} / m={m}: {e}", condition.as_str()));
                        continue;
                    }
                };
                let mut groups: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
                groups.insert(None, (0..decoded.len()).collect());
                for (i, seq) in decoded.iter().enumerate() {
                    groups.entry(Some(seq.subject_id.clone())).or_default().push(i);
                }
                for (subject, idx) in groups {
                    let row = summarize(condition, mode, m, subject.clone(), &idx, &cell, &anchors, decoded, &by_id, inputs.ks, word_bank)?;
                    if let (Some(s), Some(t5)) = (&subject, row.topk.get(&5)) {
                        subject_top5
                            .entry((mode, m))
                            .or_default()
                            .entry(condition)
                            .or_default()
                            .insert(s.clone(), *t5);
                    }
                    rows.push(row);
                }
            }
        }
    }

    let pooled = |c, mode, m| {
        rows.iter()
            .find(|r: &&MetricRow| r.subject.is_none() && r.condition == c && r.mode == mode && r.m == m)
            .and_then(|r| r.topk.get(&5).copied())
    };
    let mut recovery = Vec::new();
    for &m in inputs.decoded.keys() {
        for &mode in inputs.modes {
            let random = pooled(ConditionKind::Random, mode, m);
            let ordered = pooled(ConditionKind::Ordered, mode, m);
            let oracle = pooled(ConditionKind::Oracle, mode, m);
            recovery.push(RecoveryRow {
                mode,
                m,
                random_top5: random,
                ordered_top5: ordered,
                oracle_top5: oracle,
                delta_from_oracle: ordered.zip(oracle).map(|(o, r)| o - r),
                recovery_ratio: ordered.zip(oracle).and_then(|(o, r)| (r > 0.0).then(|| o / r)),
            });
        }
    }

    let statistics = subject_statistics(&subject_top5, &mut gaps);
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        config: ReportConfig {
            seed: inputs.seed,
            vocab_size: inputs.vocab.len(),
            vocab_hash: inputs.vocab.hash(),
            ms: inputs.decoded.keys().copied().collect(),
            ks: inputs.ks.to_vec(),
            retrieval_k: inputs.retrieval_k,
            modes: inputs.modes.to_vec(),
            template_ids: inputs.templates.iter().map(|(m, t)| (m.to_string(), t.id.clone())).collect(),
            embedder: inputs.embedder_name.clone(),
            generation: inputs.params,
            backend: match backend {
                Backend::Fallback => "fallback".into(),
                Backend::Remote(_) => "remote".into(),
            },
        },
        chance,
        rows,
        recovery,
        statistics,
        gaps,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    inputs: &SuiteInputs,
    pools: &BTreeMap<Task, TaskPool>,
    by_id: &HashMap<&str, &AnnotatedSentence>,
    decoded: &[AnchorSequence],
    anchors: &[Vec<String>],
    mode: Mode,
    backend: &Backend,
    embedder: &dyn SentenceEmbedder,
) -> Result<CellResult> {
    let mut records = vec![None; decoded.len()];
    let mut ranks = vec![None; decoded.len()];
    for (task, pool) in pools {
        let members: Vec<usize> = (0..decoded.len())
            .filter(|&i| by_id[decoded[i].sentence_id.as_str()].task == *task && !anchors[i].is_empty())
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut rec = Reconstructor::new(&pool.index);
        rec.templates = inputs.templates.clone();
        rec.params = inputs.params;
        rec.k = inputs.retrieval_k;
        let jobs: Vec<Job> = members
            .iter()
            .map(|&i| Job {
                sentence_id: decoded[i].sentence_id.clone(),
                subject_id: Some(decoded[i].subject_id.clone()),
                anchors: anchors[i].clone(),
            })
            .collect();
        let out = rec.reconstruct_all(&jobs, mode, backend, 1)?;
        let queries: Vec<&str> = out.iter().map(|r| r.output.as_str()).collect();
        let table = RankTable::build(&queries, &pool.table_pool, embedder)?;
        for (q, (&i, r)) in members.iter().zip(out).enumerate() {
            ranks[i] = table.rank(q, pool.position[decoded[i].sentence_id.as_str()]);
            records[i] = Some(r);
        }
    }
    Ok(CellResult { records, ranks })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    condition: ConditionKind,
    mode: Mode,
    m: usize,
    subject: Option<String>,
    idx: &[usize],
    cell: &CellResult,
    anchors: &[Vec<String>],
    decoded: &[AnchorSequence],
    by_id: &HashMap<&str, &AnnotatedSentence>,
    ks: &[usize],
    word_bank: Option<&EmbeddingBank>,
) -> Result<MetricRow> {
    let mut bleus = [0.0; 3];
    let (mut rouge, mut greedy_sum, mut greedy_n) = (0.0, 0.0, 0usize);
    let mut hits = Vec::with_capacity(idx.len());
    for &i in idx {
        let sentence = by_id[decoded[i].sentence_id.as_str()];
        hits.push(anchor_metrics(&anchors[i], sentence));
        let reference = tokenize(&sentence.text);
        let hyp = cell.records[i].as_ref().map(|r| tokenize(&r.output)).unwrap_or_default();
        let b = bleu(&hyp, &reference, 3, None)?;
        for (acc, v) in bleus.iter_mut().zip(b) {
            *acc += v;
        }
        rouge += rouge1_f1(&hyp, &reference);
        if let Some(bank) = word_bank {
            if let Some(f) = embedding_greedy_f1(&hyp, &reference, bank).f1 {
                greedy_sum += f;
                greedy_n += 1;
            }
        }
    }
    let n = idx.len().max(1) as f64;
    Ok(MetricRow {
        condition,
        mode,
        m,
        subject,
        n: idx.len(),
        anchor_hit: mean(hits.iter().map(|h| h.hit_fraction)),
        sentence_anchor_all: mean(hits.iter().map(|h| f64::from(u8::from(h.all_grounded)))),
        topk: ks
            .iter()
            .map(|&k| {
                let s = idx.iter().filter(|&&i| cell.ranks[i].is_some_and(|r| r <= k)).count();
                (k, s as f64 / n)
            })
            .collect(),
        bleu: bleus.map(|b| b / n),
        rouge1_f1: rouge / n,
        greedy_f1: (greedy_n > 0).then(|| greedy_sum / greedy_n as f64),
        empty_anchor_samples: idx.iter().filter(|&&i| anchors[i].is_empty()).count(),
    })
}

/// Per-subject Top-5 comparisons: repeated-measures ANOVA over conditions and
/// Bonferroni-corrected paired t-tests of ordered against the other two.
fn subject_statistics(
    data: &BTreeMap<(Mode, usize), BTreeMap<ConditionKind, BTreeMap<String, f64>>>,
    gaps: &mut Vec<String>,
) -> Vec<TestResult> {
    let mut out = Vec::new();
    for ((mode, m), by_cond) in data {
        let subjects: Vec<&String> = match by_cond.values().next() {
            Some(s) => s.keys().collect(),
            None => continue,
        };
        if subjects.len() < 2 {
            gaps.push(format!("{mode} / m={m}: statistics need at least two subjects"));
            continue;
        }
        let conds: Vec<ConditionKind> = by_cond.keys().copied().collect();
        let matrix: Vec<Vec<f64>> = subjects
            .iter()
            .map(|s| conds.iter().map(|c| by_cond[c].get(*s).copied().unwrap_or(f64::NAN)).collect())
            .collect();
        if matrix.iter().flatten().any(|v| v.is_nan()) {
            gaps.push(format!("{mode} / m={m}: incomplete per-subject data"));
            continue;
        }
        let label = |t: &mut TestResult, what: &str| t.test = format!("{} {what} ({mode}, m={m})", t.test);
        if conds.len() >= 2 {
            if let Ok(mut t) = rm_anova(&matrix) {
                label(&mut t, "top5 across conditions");
                out.push(t);
            }
        }
        let Some(oi) = conds.iter().position(|&c| c == ConditionKind::Ordered) else {
            continue;
        };
        let col = |j: usize| matrix.iter().map(|r| r[j]).collect::<Vec<_>>();
        let mut family = Vec::new();
        for (j, c) in conds.iter().enumerate().filter(|(j, _)| *j != oi) {
            if let Ok(mut t) = paired_t(&col(oi), &col(j)) {
                label(&mut t, &format!("top5 ordered vs {}", c.as_str()));
                family.push(t);
            }
        }
        bonferroni_all(&mut family);
        out.extend(family);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScores {
    pub n: usize,
    pub anchor_hit: f64,
    pub sentence_anchor_all: f64,
    pub topk: BTreeMap<usize, f64>,
    pub bleu: [f64; 3],
    pub rouge1_f1: f64,
    pub greedy_f1: Option<f64>,
}

/// Scores finished reconstruction records, from this pipeline or any other,
/// against their ground-truth sentences. Each record is ranked within the
/// pool of its sentence's task.
pub fn score_records(
    records: &[ReconstructionRecord],
    sentences: &[AnnotatedSentence],
    embedder: &dyn SentenceEmbedder,
    ks: &[usize],
    word_bank: Option<&EmbeddingBank>,
) -> Result<RecordScores> {
    if records.is_empty() {
        return Err(validation("no records to score"));
    }
    let by_id: HashMap<&str, &AnnotatedSentence> = sentences.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
    let gt = records
        .iter()
        .map(|r| {
            by_id
                .get(r.sentence_id.as_str())
                .copied()
                .ok_or_else(|| validation(format!("record refers to unknown sentence {}", r.sentence_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranks = vec![None; records.len()];
    let tasks: BTreeSet<Task> = gt.iter().map(|s| s.task).collect();
    for task in tasks {
        let pool: Vec<(&str, &str)> = sentences
            .iter()
            .filter(|s| s.task == task)
            .map(|s| (s.sentence_id.as_str(), s.text.as_str()))
            .collect();
        let members: Vec<usize> = (0..records.len()).filter(|&i| gt[i].task == task).collect();
        let queries: Vec<&str> = members.iter().map(|&i| records[i].output.as_str()).collect();
        let table = RankTable::build(&queries, &pool, embedder)?;
        for (q, &i) in members.iter().enumerate() {
            let target = pool.iter().position(|p| p.0 == records[i].sentence_id).expect("pool holds every task sentence");
            ranks[i] = table.rank(q, target);
        }
    }
    let n = records.len() as f64;
    let mut bleus = [0.0; 3];
    let (mut rouge, mut greedy_sum, mut greedy_n) = (0.0, 0.0, 0usize);
    let mut hits = Vec::with_capacity(records.len());
    for (r, s) in records.iter().zip(&gt) {
        hits.push(anchor_metrics(&r.anchors, s));
        let (hyp, reference) = (tokenize(&r.output), tokenize(&s.text));
        for (acc, v) in bleus.iter_mut().zip(bleu(&hyp, &reference, 3, None)?) {
            *acc += v;
        }
        rouge += rouge1_f1(&hyp, &reference);
        if let Some(f) = word_bank.and_then(|b| embedding_greedy_f1(&hyp, &reference, b).f1) {
            greedy_sum += f;
            greedy_n += 1;
        }
    }
    Ok(RecordScores {
        n: records.len(),
        anchor_hit: mean(hits.iter().map(|h| h.hit_fraction)),
        sentence_anchor_all: mean(hits.iter().map(|h| f64::from(u8::from(h.all_grounded)))),
        topk: ks
            .iter()
            .map(|&k| (k, ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / n))
            .collect(),
        bleu: bleus.map(|b| b / n),
        rouge1_f1: rouge / n,
        greedy_f1: (greedy_n > 0).then(|| greedy_sum / greedy_n as f64),
    })
}
