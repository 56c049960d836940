//! Desk-scale synthetic experiments: train on a generated corpus, sweep SNR,
//! decode anchors and score reconstructions.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aligner::{
    decode_anchors, evaluate_alignment, prepare_sequences, train, AlignerModel, AlignmentStats, AnchorSequence,
    EncoderConfig, TrainConfig, TrainOutcome,
};
use crate::corpus::{split, AnnotatedSentence, EegWordSequence, Part, Split, SplitSpec};
use crate::error::{validation, Result};
use crate::eval::{permutation_test, PermutationResult, RankTable, SentenceEmbedder};
use crate::reconstruct::ReconstructionRecord;
use crate::synth::{generate, SynthDataset, SynthSpec, FILLER_SURFACES};

/// Training settings for synthetic runs. The small encoder converges in a few
/// dozen epochs at this learning rate; the library default is tuned for the
/// full-size model.
pub fn synthetic_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        epochs: 30,
        seed,
        ..TrainConfig::default()
    }
}

/// Stopwords for retrieval over synthetic text: the filler surfaces.
pub fn synthetic_stopwords() -> BTreeSet<String> {
    FILLER_SURFACES.iter().map(|s| s.to_string()).collect()
}

pub struct TrainedSynthetic {
    pub data: SynthDataset,
    pub split: Split,
    pub outcome: TrainOutcome,
    pub test: AlignmentStats,
    pub seconds: f64,
}

impl TrainedSynthetic {
    pub fn samples(&self, part: Part) -> Vec<&EegWordSequence> {
        self.split.samples(&self.data.corpus, part)
    }
}

/// Generates `spec`, splits by sentence, trains a compact encoder and scores
/// held-out keyword identification.
pub fn train_synthetic(spec: &SynthSpec, split_spec: &SplitSpec, cfg: &TrainConfig) -> Result<TrainedSynthetic> {
    let start = Instant::now();
    let data = generate(spec)?;
    let sp = split(&data.corpus, split_spec)?;
    let prep = |p| prepare_sequences(&data.corpus, &sp.samples(&data.corpus, p), &data.vocab);
    let (tr, va, te) = (prep(Part::Train)?, prep(Part::Val)?, prep(Part::Test)?);
    let enc = EncoderConfig::compact(spec.feature_dim, spec.bank_dim);
    let model = AlignerModel::new(enc, &data.vocab, &data.bank, cfg.tau_init, cfg.seed)?;
    let outcome = train(model, &tr, &va, cfg)?;
    let test = evaluate_alignment(&outcome.model, &te)?;
    Ok(TrainedSynthetic {
        data,
        split: sp,
        outcome,
        test,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Serialized as `"inf"` / `"-inf"` at the ends.
    #[serde(serialize_with = "crate::synth::ser_db", deserialize_with = "crate::synth::de_db")]
    pub snr_db: f64,
    pub test: AlignmentStats,
    pub best_epoch: usize,
    pub seconds: f64,
}

/// Trains one model per SNR level, everything else fixed.
pub fn snr_sweep(base: &SynthSpec, levels: &[f64], split_spec: &SplitSpec, cfg: &TrainConfig) -> Result<Vec<SweepPoint>> {
    levels
        .iter()
        .map(|&snr_db| {
            let run = train_synthetic(&SynthSpec { snr_db, ..base.clone() }, split_spec, cfg)?;
            log::info!("snr {snr_db} dB: top1 {:.4} top5 {:.4}", run.test.top1, run.test.top5);
            Ok(SweepPoint {
                snr_db,
                test: run.test,
                best_epoch: run.outcome.best_epoch,
                seconds: run.seconds,
            })
        })
        .collect()
}

/// Whether Top-1 never rises by more than `tol` as SNR falls. Points are
/// ordered by decreasing SNR first.
pub fn non_increasing(points: &[SweepPoint], tol: f64) -> bool {
    let mut v: Vec<&SweepPoint> = points.iter().collect();
    v.sort_by(|a, b| b.snr_db.total_cmp(&a.snr_db));
    v.windows(2).all(|w| w[1].test.top1 <= w[0].test.top1 + tol)
}

/// Clopper-Pearson 95% interval for a binomial proportion.
pub fn binomial_ci95(successes: usize, n: usize) -> (f64, f64) {
    use statrs::distribution::{Beta, ContinuousCDF};
    let (x, n) = (successes as f64, n as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).expect("valid beta").inverse_cdf(0.025)
    };
    let hi = if successes as f64 == n {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).expect("valid beta").inverse_cdf(0.975)
    };
    (lo, hi)
}

pub fn decode_samples(model: &AlignerModel, samples: &[&EegWordSequence], m: usize) -> Result<Vec<AnchorSequence>> {
    samples.iter().map(|s| decode_anchors(model, s, m)).collect()
}

/// Rank table of reconstruction outputs against `pool`, with the pool index
/// of each record's ground-truth sentence.
pub fn rank_reconstructions(
    records: &[ReconstructionRecord],
    pool: &[&AnnotatedSentence],
    embedder: &dyn SentenceEmbedder,
) -> Result<(RankTable, Vec<usize>)> {
    let pool_pairs: Vec<(&str, &str)> = pool.iter().map(|s| (s.sentence_id.as_str(), s.text.as_str())).collect();
    let targets = records
        .iter()
        .map(|r| {
            pool.iter()
                .position(|s| s.sentence_id == r.sentence_id)
                .ok_or_else(|| validation(format!("sentence {} is not in the pool", r.sentence_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let queries: Vec<&str> = records.iter().map(|r| r.output.as_str()).collect();
    Ok((RankTable::build(&queries, &pool_pairs, embedder)?, targets))
}

/// Permutation p-values after first shuffling the reconstruction→sentence
/// labels, once per repeat. Under this null the observed statistic is itself
/// a random reassignment, so p should be roughly uniform.
pub fn shuffled_label_control(
    table: &RankTable,
    targets: &[usize],
    k: usize,
    n_perm: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<PermutationResult>> {
    (0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1_000_000 + r as u64);
            let mut shuffled = targets.to_vec();
            shuffled.shuffle(&mut rng);
            permutation_test(table, &shuffled, k, n_perm, seed.wrapping_add(r as u64 + 1))
        })
        .collect()
}
