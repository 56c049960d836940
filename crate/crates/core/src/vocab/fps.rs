use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::cosine;
use crate::error::{validation, Result};

#[derive(Debug, Clone, Copy)]
pub struct FpsItem<'a> {
    pub lemma: &'a str,
    pub frequency: usize,
    pub vector: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartRule {
    /// Highest corpus frequency, ties by lexicographically smallest lemma.
    HighestFrequency,
    /// A fixed item index.
    Index(usize),
}

impl StartRule {
    pub fn label(&self) -> String {
        match self {
            StartRule::HighestFrequency => "highest-frequency".to_string(),
            StartRule::Index(i) => format!("index-{i}"),
        }
    }
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine(a, b)
}

/// Greedy farthest-point selection under cosine distance. Returns item
/// indices in selection order. Each pick maximizes the minimum distance to
/// the already selected set; ties go to the earliest item.
pub fn farthest_point_sample(items: &[FpsItem<'_>], k: usize, start: &StartRule) -> Result<Vec<usize>> {
    if k > items.len() {
        return Err(validation(format!("cannot select {k} of {} items", items.len())));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let dim = items[0].vector.len();
    if items.iter().any(|it| it.vector.len() != dim) {
        return Err(validation("farthest-point sampling needs vectors of one dimension"));
    }
    let first = match start {
        StartRule::HighestFrequency => items
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.frequency.cmp(&b.frequency).then_with(|| b.lemma.cmp(a.lemma)))
            .map(|(i, _)| i)
            .unwrap(),
        StartRule::Index(i) if *i < items.len() => *i,
        StartRule::Index(i) => return Err(validation(format!("start index {i} out of range"))),
    };

    let mut selected = vec![first];
    let mut is_selected = vec![false; items.len()];
    is_selected[first] = true;
    let mut min_dist: Vec<f64> = items
        .par_iter()
        .map(|it| cosine_distance(it.vector, items[first].vector))
        .collect();

    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for (i, d) in min_dist.iter().enumerate() {
            if is_selected[i] {
                continue;
            }
            if best.is_none_or(|(_, bd)| *d > bd) {
                best = Some((i, *d));
            }
        }
        let (next, _) = best.expect("k <= items.len()");
        selected.push(next);
        is_selected[next] = true;
        let pivot = items[next].vector;
        min_dist
            .par_iter_mut()
            .zip(items.par_iter())
            .for_each(|(d, it)| *d = d.min(cosine_distance(it.vector, pivot)));
    }
    Ok(selected)
}
