use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{validation, Result};

/// Loss value plus gradients w.r.t. the query rows and the log-temperature.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub d_queries: Array2<f64>,
    pub d_log_tau: f64,
}

/// Mean cross-entropy of `softmax(q · candidates / tau)` against `targets`.
/// `q` rows are unit vectors (one per supervised position); `candidates`
/// holds one unit row per class.
pub fn alignment_loss(
    queries: ArrayView2<f64>,
    targets: &[usize],
    candidates: ArrayView2<f64>,
    tau: f64,
) -> Result<LossGrad> {
    if targets.is_empty() || queries.nrows() == 0 {
        return Err(validation("alignment loss needs at least one supervised position"));
    }
    if queries.nrows() != targets.len() {
        return Err(validation("one target per query row is required"));
    }
    if !(tau > 0.0) {
        return Err(validation("temperature must be positive"));
    }
    let classes = candidates.nrows();
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(validation(format!("target id {bad} out of range for {classes} classes")));
    }

    let sims = queries.dot(&candidates.t());
    let probs = softmax_scaled(&sims, tau);
    let n = targets.len() as f64;

    let mut loss = 0.0;
    let mut dlogits = probs;
    let mut d_log_tau = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = sims.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v / tau));
        let lse = max + row.iter().map(|v| (v / tau - max).exp()).sum::<f64>().ln();
        loss += lse - sims[[i, t]] / tau;
        dlogits[[i, t]] -= 1.0;
    }
    dlogits /= n;
    // logits = sims / tau = sims * exp(-log_tau)
    for (dl, s) in dlogits.iter().zip(sims.iter()) {
        d_log_tau -= dl * s / tau;
    }
    let d_queries = dlogits.dot(&candidates) / tau;
    Ok(LossGrad {
        loss: loss / n,
        d_queries,
        d_log_tau,
    })
}

/// Row-wise `softmax(sims / tau)`.
pub fn softmax_scaled(sims: &Array2<f64>, tau: f64) -> Array2<f64> {
    let mut out = sims / tau;
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Instance discrimination between clean and perturbed views: row `i` of
/// `clean` must pick row `i` of `noisy` among all rows. Gradients are
/// returned for both views and for the log-temperature.
pub fn discrimination_loss(
    clean: ArrayView2<f64>,
    noisy: ArrayView2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>, f64)> {
    let n = clean.nrows();
    let targets: Vec<usize> = (0..n).collect();
    let lg = alignment_loss(clean, &targets, noisy, tau)?;
    // d/d noisy: logits_ij = c_i · v_j / tau
    let probs = softmax_scaled(&clean.dot(&noisy.t()), tau);
    let mut dlogits = probs;
    for i in 0..n {
        dlogits[[i, i]] -= 1.0;
    }
    dlogits /= n as f64;
    let d_noisy = dlogits.t().dot(&clean) / tau;
    Ok((lg.loss, lg.d_queries, d_noisy, lg.d_log_tau))
}

/// 1-based rank of `target` among `sims` (descending, ties counted against).
pub fn target_rank(sims: &Array1<f64>, target: usize) -> usize {
    let t = sims[target];
    1 + sims
        .iter()
        .enumerate()
        .filter(|(j, &v)| *j != target && (v > t || (v == t && *j < target)))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_rows(m: Array2<f64>) -> Array2<f64> {
        let mut m = m;
        for mut r in m.axis_iter_mut(Axis(0)) {
            let n = r.dot(&r).sqrt();
            r /= n;
        }
        m
    }

    #[test]
    fn orthogonal_query_gives_log_v() {
        for v in [2usize, 50, 100] {
            // bank spans dims 1..; query is e_0
            let mut bank = Array2::zeros((v, v + 1));
            for j in 0..v {
                bank[[j, j + 1]] = 1.0;
            }
            let mut q = Array2::zeros((1, v + 1));
            q[[0, 0]] = 1.0;
            for tau in [0.07, 1.0, 3.0] {
                let l = alignment_loss(q.view(), &[v - 1], bank.view(), tau).unwrap();
                assert!((l.loss - (v as f64).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_class_closed_form() {
        let bank = array![[1.0, 0.0], [0.0, 1.0]];
        let q = array![[1.0, 0.0]];
        let l = alignment_loss(q.view(), &[0], bank.view(), 1.0).unwrap();
        assert!((l.loss - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-9);
        assert!((l.loss - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn saturates_at_low_temperature() {
        let bank = array![[1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]];
        let q = array![[1.0, 0.0]];
        let l = alignment_loss(q.view(), &[0], bank.view(), 0.01).unwrap();
        assert!(l.loss <= 1e-6 && l.loss >= 0.0);
    }

    #[test]
    fn errors() {
        let bank = array![[1.0, 0.0]];
        let q = Array2::<f64>::zeros((0, 2));
        assert!(alignment_loss(q.view(), &[], bank.view(), 1.0).is_err());
        assert!(alignment_loss(array![[1.0, 0.0]].view(), &[3], bank.view(), 1.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = unit_rows(Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0)));
        let bank = unit_rows(Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0)));
        let targets = [1, 4, 0];
        let tau = 0.3;
        let g = alignment_loss(q.view(), &targets, bank.view(), tau).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..4 {
                let mut p = q.clone();
                p[[i, j]] += h;
                let mut m = q.clone();
                m[[i, j]] -= h;
                let num = (alignment_loss(p.view(), &targets, bank.view(), tau).unwrap().loss
                    - alignment_loss(m.view(), &targets, bank.view(), tau).unwrap().loss)
                    / (2.0 * h);
                assert!((num - g.d_queries[[i, j]]).abs() < 1e-7);
            }
        }
        let lt = tau.ln();
        let num = (alignment_loss(q.view(), &targets, bank.view(), (lt + h).exp()).unwrap().loss
            - alignment_loss(q.view(), &targets, bank.view(), (lt - h).exp()).unwrap().loss)
            / (2.0 * h);
        assert!((num - g.d_log_tau).abs() < 1e-7);

        let noisy = unit_rows(Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0)));
        let (_, dc, dn, _) = discrimination_loss(q.view(), noisy.view(), tau).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mut p = noisy.clone();
                p[[i, j]] += h;
                let mut m = noisy.clone();
                m[[i, j]] -= h;
                let num = (discrimination_loss(q.view(), p.view(), tau).unwrap().0
                    - discrimination_loss(q.view(), m.view(), tau).unwrap().0)
                    / (2.0 * h);
                assert!((num - dn[[i, j]]).abs() < 1e-7);
            }
        }
        assert_eq!(dc.dim(), (3, 4));
    }

    #[test]
    fn softmax_normalizes() {
        let sims = array![[0.3, -0.2, 0.9], [1.0, 1.0, 1.0]];
        let p = softmax_scaled(&sims, 0.07);
        for r in p.axis_iter(Axis(0)) {
            assert!((r.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn ranks() {
        let s = array![0.1, 0.9, 0.5, 0.9];
        assert_eq!(target_rank(&s, 1), 1);
        assert_eq!(target_rank(&s, 3), 2);
        assert_eq!(target_rank(&s, 0), 4);
    }
}
