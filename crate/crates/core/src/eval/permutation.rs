use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::retrieval::RankTable;
use crate::error::{validation, Result};

pub const MIN_PERMUTATIONS: usize = 100;
pub const MIN_SENTENCES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub null: Vec<f64>,
    pub p: f64,
    pub n_perm: usize,
    pub k: usize,
    pub n: usize,
}

/// Top-k accuracy under the true reconstruction→sentence assignment versus
/// `n_perm` random reassignments. `p = (1 + #{null >= observed}) / (n_perm + 1)`.
/// Permutation `i` draws from its own ChaCha stream, so results do not depend
/// on thread scheduling.
pub fn permutation_test(table: &RankTable, targets: &[usize], k: usize, n_perm: usize, seed: u64) -> Result<PermutationResult> {
    if targets.len() < MIN_SENTENCES {
        return Err(validation(format!(
            "permutation test needs at least {MIN_SENTENCES} sentences, got {}",
            targets.len()
        )));
    }
    if n_perm < MIN_PERMUTATIONS {
        return Err(validation(format!("n_perm must be at least {MIN_PERMUTATIONS}")));
    }
    let observed = table.accuracy(targets, k);
    let null: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mut shuffled = targets.to_vec();
            shuffled.shuffle(&mut rng);
            table.accuracy(&shuffled, k)
        })
        .collect();
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    Ok(PermutationResult {
        observed,
        p: (1 + exceed) as f64 / (n_perm + 1) as f64,
        null,
        n_perm,
        k,
        n: targets.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Query i ranks pool item i first, the rest in order.
    fn diagonal(n: usize) -> RankTable {
        RankTable {
            pool_ids: (0..n).map(|i| i.to_string()).collect(),
            rows: (0..n)
                .map(|q| Some((0..n).map(|j| if j == q { 1 } else if j < q { j + 2 } else { j + 1 }).collect()))
                .collect(),
        }
    }

    #[test]
    fn perfect_separation_hits_the_floor() {
        let t = diagonal(30);
        let targets: Vec<usize> = (0..30).collect();
        let r = permutation_test(&t, &targets, 1, 200, 4).unwrap();
        assert_eq!(r.observed, 1.0);
        assert_eq!(r.p, 1.0 / 201.0);
    }

    #[test]
    fn deterministic_and_on_grid() {
        let t = diagonal(12);
        let targets: Vec<usize> = (0..12).rev().collect();
        let a = permutation_test(&t, &targets, 3, 150, 9).unwrap();
        let b = permutation_test(&t, &targets, 3, 150, 9).unwrap();
        assert_eq!(a, b);
        let scaled = a.p * 151.0;
        assert!((scaled - scaled.round()).abs() < 1e-9 && a.p > 0.0);
    }

    #[test]
    fn guards() {
        let t = diagonal(4);
        assert!(permutation_test(&t, &[0, 1, 2, 3], 1, 200, 0).is_err());
        let t = diagonal(6);
        assert!(permutation_test(&t, &[0, 1, 2, 3, 4, 5], 1, 99, 0).is_err());
    }
}
