use std::cmp::Ordering;
use std::collections::HashMap;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::AlignerModel;
use crate::corpus::EegWordSequence;
use crate::error::{validation, Result};

/// Nearest keyword for one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentPrediction {
    pub position: usize,
    pub keyword_id: usize,
    /// Cosine similarity to the matched keyword.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEntry {
    pub keyword_id: usize,
    pub lemma: String,
    pub source_position: usize,
    pub confidence: f64,
}

/// Decoded anchors for one sample, in reading order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSequence {
    pub sentence_id: String,
    pub subject_id: String,
    pub entries: Vec<AnchorEntry>,
    pub m_requested: usize,
}

impl AnchorSequence {
    pub fn lemmas(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.lemma.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Argmax over each row of a segments × V similarity matrix. Ties go to the
/// lower keyword id.
pub fn predict_segments(sims: &Array2<f64>, positions: &[usize]) -> Vec<SegmentPrediction> {
    sims.rows()
        .into_iter()
        .zip(positions)
        .map(|(row, &position)| {
            let (keyword_id, confidence) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
            SegmentPrediction {
                position,
                keyword_id,
                confidence,
            }
        })
        .collect()
}

fn by_confidence(a: &SegmentPrediction, b: &SegmentPrediction) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then(a.position.cmp(&b.position))
}

/// Keeps one prediction per keyword (highest confidence, earliest position on
/// ties), then the `m` most confident, returned in position order.
pub fn select_anchors(preds: &[SegmentPrediction], m: usize) -> Vec<SegmentPrediction> {
    let mut best: HashMap<usize, SegmentPrediction> = HashMap::new();
    for p in preds {
        best.entry(p.keyword_id)
            .and_modify(|cur| {
                if by_confidence(p, cur) == Ordering::Less {
                    *cur = *p;
                }
            })
            .or_insert(*p);
    }
    let mut kept: Vec<SegmentPrediction> = best.into_values().collect();
    kept.sort_by(by_confidence);
    kept.truncate(m);
    kept.sort_by_key(|p| p.position);
    kept
}

pub fn decode_anchors(model: &AlignerModel, sample: &EegWordSequence, m: usize) -> Result<AnchorSequence> {
    if m == 0 {
        return Err(validation("m must be at least 1"));
    }
    let mut seq = AnchorSequence {
        sentence_id: sample.sentence_id.clone(),
        subject_id: sample.subject_id.clone(),
        entries: Vec::new(),
        m_requested: m,
    };
    if sample.segments.is_empty() {
        warn!(
            "sample {}/{} has no segments; empty anchor sequence",
            sample.sentence_id, sample.subject_id
        );
        return Ok(seq);
    }
    let dim = model.config.input_dim;
    let mut flat = Vec::with_capacity(sample.segments.len() * dim);
    for s in &sample.segments {
        if s.features.len() != dim {
            return Err(validation(format!(
                "segment at position {} has {} features, model expects {dim}",
                s.position,
                s.features.len()
            )));
        }
        flat.extend_from_slice(&s.features);
    }
    let x = Array2::from_shape_vec((sample.segments.len(), dim), flat).expect("checked dims");
    let y = model.encode(x.view())?;
    let positions: Vec<usize> = sample.segments.iter().map(|s| s.position).collect();
    let preds = predict_segments(&model.similarities(&y), &positions);
    seq.entries = select_anchors(&preds, m)
        .into_iter()
        .map(|p| AnchorEntry {
            keyword_id: p.keyword_id,
            lemma: model.vocab()[p.keyword_id].clone(),
            source_position: p.position,
            confidence: p.confidence,
        })
        .collect();
    Ok(seq)
}
