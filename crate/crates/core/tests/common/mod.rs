#![allow(dead_code)]

use std::path::PathBuf;

use anchorlab::aligner::{AnchorSequence, Encoder, EncoderConfig, EncoderWeights};
use anchorlab::corpus::{load_dataset, Corpus};
use anchorlab::embedding::EmbeddingBank;
use anchorlab::vocab::VocabParams;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative error per named parameter tensor between the analytic gradient
/// of `sum(y * probe)` and central finite differences. Large tensors are
/// checked on a fixed sample of up to `per_tensor` entries.
pub fn encoder_gradient_errors(cfg: &EncoderConfig, len: usize, seed: u64, per_tensor: usize) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = EncoderWeights::init(cfg, seed);
    let x = Array2::from_shape_fn((len, cfg.input_dim), |_| rng.random_range(-1.0..1.0));
    let probe = Array2::from_shape_fn((len, cfg.output_dim), |_| rng.random_range(-1.0..1.0));

    let scalar = |w: &EncoderWeights| -> f64 {
        let enc = Encoder { config: cfg, weights: w };
        (enc.encode(x.view()).unwrap() * &probe).sum()
    };
    let enc = Encoder { config: cfg, weights: &weights };
    let cache = enc.forward(x.view()).unwrap();
    let grad = enc.backward(&cache, &probe);

    let names: Vec<String> = weights.tensors().iter().map(|t| t.name.clone()).collect();
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.data.to_vec()).collect();
    let h = 1e-5;
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let n = analytic[ti].len();
        let idx: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..n)).collect()
        };
        let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
        for &i in &idx {
            let mut plus = weights.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = weights.clone();
            minus.tensors_mut()[ti][i] -= h;
            let num = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
            let a = analytic[ti][i];
            diff += (a - num).powi(2);
            norm_a += a * a;
            norm_n += num * num;
        }
        let denom = norm_a.sqrt() + norm_n.sqrt();
        // both sides at finite-difference noise level: an exactly-zero
        // gradient (key bias under row-wise softmax, unused positions)
        let vanishing = norm_a.sqrt() < 1e-8 && norm_n.sqrt() < 1e-8;
        let rel = if vanishing { 0.0 } else { diff.sqrt() / denom };
        out.push((name.clone(), rel));
    }
    out
}

pub fn compact_probe_config() -> EncoderConfig {
    let mut cfg = EncoderConfig::compact(12, 8);
    cfg.max_positions = 8;
    cfg
}

pub const TOY_FEATURE_DIM: usize = 4;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn toy_corpus() -> Corpus {
    load_dataset(fixture("toy.jsonl"), TOY_FEATURE_DIM).unwrap().0
}

pub fn toy_bank() -> EmbeddingBank {
    EmbeddingBank::load(fixture("toy_words.txt")).unwrap()
}

/// The settings under which `toy_vocab_v5.txt` was audited by hand.
pub fn toy_vocab_params() -> VocabParams {
    VocabParams {
        size: 5,
        min_freq: 2,
        ..VocabParams::default()
    }
}

pub fn toy_decoded() -> Vec<AnchorSequence> {
    std::fs::read_to_string(fixture("toy_decoded.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// `(hit_fraction, all_grounded)` rows from the committed oracle output.
pub fn toy_decoded_expected() -> Vec<(f64, bool)> {
    std::fs::read_to_string(fixture("toy_decoded_expected.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].parse().unwrap(), f[3] == "true")
        })
        .collect()
}

/// Plain greedy farthest-point oracle: start at `start`, then repeatedly take
/// the first candidate whose distance to its nearest selected point is
/// largest, recomputing every distance from scratch.
pub fn fps_oracle(vectors: &[Vec<f64>], k: usize, start: usize) -> Vec<usize> {
    let dist = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        1.0 - d / (na * nb)
    };
    let mut chosen = vec![start];
    while chosen.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for c in 0..vectors.len() {
            if chosen.contains(&c) {
                continue;
            }
            let nearest = chosen.iter().map(|&s| dist(&vectors[c], &vectors[s])).fold(f64::INFINITY, f64::min);
            if nearest > best.1 {
                best = (c, nearest);
            }
        }
        chosen.push(best.0);
    }
    chosen
}

/// Two-tailed Student-t p for three degrees of freedom, from the closed-form CDF.
pub fn t3_two_tailed_p(t: f64) -> f64 {
    let x = t.abs() / 3f64.sqrt();
    1.0 - 2.0 / std::f64::consts::PI * (x / (1.0 + x * x) + x.atan())
}
