use std::io::Write;

use log::info;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderWeights, ForwardCache};
use super::loss::{alignment_loss, discrimination_loss, target_rank};
use super::{AlignerModel, TrainConfig};
use crate::corpus::{Corpus, EegWordSequence};
use crate::error::{validation, Error, Result};
use crate::vocab::KeywordVocabulary;

/// A sample ready for the encoder: features in segment order and, per
/// segment, the keyword id of its lemma when that lemma is in the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSequence {
    pub sentence_id: String,
    pub subject_id: String,
    pub features: Array2<f64>,
    pub positions: Vec<usize>,
    pub targets: Vec<Option<usize>>,
}

impl TrainSequence {
    pub fn supervised(&self) -> usize {
        self.targets.iter().flatten().count()
    }
}

pub fn prepare_sequence(corpus: &Corpus, sample: &EegWordSequence, vocab: &KeywordVocabulary) -> Result<TrainSequence> {
    let sentence = corpus
        .sentence(&sample.sentence_id)
        .ok_or_else(|| validation(format!("unknown sentence_id {}", sample.sentence_id)))?;
    let dim = corpus.feature_dim();
    let mut flat = Vec::with_capacity(sample.segments.len() * dim);
    let mut positions = Vec::with_capacity(sample.segments.len());
    let mut targets = Vec::with_capacity(sample.segments.len());
    for seg in &sample.segments {
        flat.extend_from_slice(&seg.features);
        positions.push(seg.position);
        targets.push(vocab.id_of(&sentence.tokens[seg.position].lemma));
    }
    Ok(TrainSequence {
        sentence_id: sample.sentence_id.clone(),
        subject_id: sample.subject_id.clone(),
        features: Array2::from_shape_vec((positions.len(), dim), flat).expect("validated dims"),
        positions,
        targets,
    })
}

pub fn prepare_sequences(
    corpus: &Corpus,
    samples: &[&EegWordSequence],
    vocab: &KeywordVocabulary,
) -> Result<Vec<TrainSequence>> {
    samples.iter().map(|s| prepare_sequence(corpus, s, vocab)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_top1: f64,
    pub val_top5: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub loss: f64,
    pub top1: f64,
    pub top5: f64,
    /// Number of supervised positions scored.
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AlignerModel,
    pub history: Vec<EpochMetrics>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

/// Loss and top-1/top-5 keyword accuracy over all supervised positions.
pub fn evaluate_alignment(model: &AlignerModel, seqs: &[TrainSequence]) -> Result<AlignmentStats> {
    let per_seq: Vec<Result<Vec<(Array1<f64>, usize)>>> = seqs
        .par_iter()
        .map(|seq| {
            if seq.supervised() == 0 {
                return Ok(Vec::new());
            }
            let y = model.encode(seq.features.view())?;
            let sims = model.similarities(&y);
            Ok(seq
                .targets
                .iter()
                .enumerate()
                .filter_map(|(i, t)| t.map(|t| (sims.row(i).to_owned(), t)))
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seq {
        rows.extend(r?);
    }
    if rows.is_empty() {
        return Ok(AlignmentStats {
            loss: f64::NAN,
            top1: 0.0,
            top5: 0.0,
            n: 0,
        });
    }
    let tau = model.tau();
    let (mut loss, mut top1, mut top5) = (0.0, 0usize, 0usize);
    for (sims, t) in &rows {
        let max = sims.fold(f64::NEG_INFINITY, |m, &v| m.max(v / tau));
        let lse = max + sims.iter().map(|v| (v / tau - max).exp()).sum::<f64>().ln();
        loss += lse - sims[*t] / tau;
        let rank = target_rank(sims, *t);
        top1 += usize::from(rank == 1);
        top5 += usize::from(rank <= 5);
    }
    let n = rows.len() as f64;
    Ok(AlignmentStats {
        loss: loss / n,
        top1: top1 as f64 / n,
        top5: top5 as f64 / n,
        n: rows.len(),
    })
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    m_tau: f64,
    v_tau: f64,
    step: i32,
}

impl Adam {
    fn new(weights: &EncoderWeights) -> Self {
        let shapes: Vec<usize> = weights.tensors().iter().map(|t| t.data.len()).collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            m_tau: 0.0,
            v_tau: 0.0,
            step: 0,
        }
    }

    fn update(&mut self, model: &mut AlignerModel, grad: &EncoderWeights, d_log_tau: f64, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let lr = cfg.learning_rate;
        let grads = grad.tensors();
        for (((p, g), m), v) in model
            .weights
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g.data[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let step = (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
                p[i] -= lr * (step + cfg.weight_decay * p[i]);
            }
        }
        if model.learn_tau {
            self.m_tau = cfg.beta1 * self.m_tau + (1.0 - cfg.beta1) * d_log_tau;
            self.v_tau = cfg.beta2 * self.v_tau + (1.0 - cfg.beta2) * d_log_tau * d_log_tau;
            model.log_tau -= lr * (self.m_tau / bc1) / ((self.v_tau / bc2).sqrt() + cfg.epsilon);
        }
    }
}

/// Loss and gradient for one mini-batch. Sequences without supervised
/// positions contribute nothing; `None` when the whole batch is unsupervised.
pub fn batch_gradient(
    model: &AlignerModel,
    batch: &[&TrainSequence],
    aux: Option<(&[Array2<f64>], f64)>,
) -> Result<Option<(f64, EncoderWeights, f64)>> {
    let batch: Vec<(usize, &TrainSequence)> = batch
        .iter()
        .enumerate()
        .filter(|(_, s)| s.supervised() > 0)
        .map(|(i, s)| (i, *s))
        .collect();
    if batch.is_empty() {
        return Ok(None);
    }
    let encoder = model.encoder();
    let clean: Vec<ForwardCache> = batch
        .par_iter()
        .map(|(_, s)| encoder.forward(s.features.view()))
        .collect::<Result<_>>()?;

    let dim = model.config.output_dim;
    let mut rows: Vec<(usize, usize)> = Vec::new();
    let mut targets = Vec::new();
    for (bi, (_, seq)) in batch.iter().enumerate() {
        for (pi, t) in seq.targets.iter().enumerate() {
            if let Some(t) = t {
                rows.push((bi, pi));
                targets.push(*t);
            }
        }
    }
    let gather = |caches: &[ForwardCache]| {
        let mut q = Array2::zeros((rows.len(), dim));
        for (r, &(bi, pi)) in rows.iter().enumerate() {
            q.row_mut(r).assign(&caches[bi].output().row(pi));
        }
        q
    };
    let queries = gather(&clean);
    let lg = alignment_loss(queries.view(), &targets, model.bank().view(), model.tau())?;
    let mut loss = lg.loss;
    let mut d_clean = lg.d_queries;
    let mut d_log_tau = lg.d_log_tau;

    let mut noisy_caches = Vec::new();
    let mut d_noisy = None;
    if let Some((noise, weight)) = aux.filter(|(_, w)| *w > 0.0) {
        noisy_caches = batch
            .par_iter()
            .map(|(i, s)| encoder.forward((&s.features + &noise[*i]).view()))
            .collect::<Result<_>>()?;
        let noisy_q = gather(&noisy_caches);
        let (aux_loss, dc, dn, dt) = discrimination_loss(queries.view(), noisy_q.view(), model.tau())?;
        loss += weight * aux_loss;
        d_log_tau += weight * dt;
        d_clean = d_clean + dc * weight;
        d_noisy = Some(dn * weight);
    }

    let scatter = |d_rows: &Array2<f64>, caches: &[ForwardCache]| -> Vec<Array2<f64>> {
        let mut out: Vec<Array2<f64>> = caches.iter().map(|c| Array2::zeros(c.output().raw_dim())).collect();
        for (r, &(bi, pi)) in rows.iter().enumerate() {
            out[bi].row_mut(pi).assign(&d_rows.row(r));
        }
        out
    };
    let mut jobs: Vec<(&ForwardCache, Array2<f64>)> = clean.iter().zip(scatter(&d_clean, &clean)).collect();
    if let Some(dn) = &d_noisy {
        jobs.extend(noisy_caches.iter().zip(scatter(dn, &noisy_caches)));
    }
    let grads: Vec<EncoderWeights> = jobs
        .par_iter()
        .map(|(cache, dy)| encoder.backward(cache, dy))
        .collect();
    let mut total = model.weights.zeros_like();
    for g in &grads {
        total.add_assign(g);
    }
    Ok(Some((loss, total, d_log_tau)))
}

fn perturbations(batch: &[&TrainSequence], scale: f64, rng: &mut ChaCha8Rng) -> Vec<Array2<f64>> {
    batch
        .iter()
        .map(|s| {
            let rms = (s.features.mapv(|v| v * v).mean().unwrap_or(0.0)).sqrt().max(1e-12);
            Array2::from_shape_fn(s.features.raw_dim(), |_| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale * rms
            })
        })
        .collect()
}

/// Mini-batch training with best-validation-loss model selection.
pub fn train(
    mut model: AlignerModel,
    train_set: &[TrainSequence],
    val_set: &[TrainSequence],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.iter().all(|s| s.supervised() == 0) {
        return Err(validation("training split has no supervised positions"));
    }
    model.log_tau = cfg.tau_init.ln();
    model.learn_tau = cfg.learn_tau;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.weights);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, AlignerModel)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&TrainSequence> = chunk.iter().map(|&i| &train_set[i]).collect();
            let noise = (cfg.aux_weight > 0.0).then(|| perturbations(&batch, cfg.aux_noise, &mut rng));
            let aux = noise.as_deref().map(|n| (n, cfg.aux_weight));
            let Some((loss, grad, d_tau)) = batch_gradient(&model, &batch, aux)? else {
                continue;
            };
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Divergence(format!(
                    "epoch {epoch}, batch {bi}: loss {loss}, tau {:.4}",
                    model.tau()
                )));
            }
            adam.update(&mut model, &grad, d_tau, cfg);
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        let val = evaluate_alignment(&model, val_set)?;
        if val.n > 0 && !val.loss.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: validation loss {}", val.loss)));
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            val_loss: val.loss,
            val_top1: val.top1,
            val_top5: val.top5,
        };
        info!(
            "epoch {epoch}: train {train_loss:.4} val {:.4} top1 {:.3} top5 {:.3}",
            val.loss, val.top1, val.top5
        );
        history.push(metrics);
        // with no validation positions the last epoch wins
        let score = if val.n > 0 { val.loss } else { f64::NEG_INFINITY };
        if best.as_ref().is_none_or(|(b, _, _)| score < *b || val.n == 0) {
            best = Some((score, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.unwrap_or((0.0, 0, model));
    Ok(TrainOutcome {
        model: best_model,
        history,
        best_epoch,
    })
}

pub fn write_training_log<W: Write>(history: &[EpochMetrics], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss,val_top1,val_top5")?;
    for m in history {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6}",
            m.epoch, m.train_loss, m.val_loss, m.val_top1, m.val_top5
        )?;
    }
    Ok(())
}

/// Index of the largest similarity per row.
pub fn argmax_rows(sims: &Array2<f64>) -> Vec<usize> {
    sims.axis_iter(Axis(0))
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}
