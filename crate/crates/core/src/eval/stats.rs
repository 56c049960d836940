use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{validation, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    /// Infinite when a paired difference has zero spread.
    #[serde(serialize_with = "crate::synth::ser_db", deserialize_with = "crate::synth::de_db")]
    pub statistic: f64,
    pub df1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df2: Option<f64>,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<String>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn check_subjects(n: usize) -> Result<()> {
    if n < 2 {
        return Err(validation("at least two subjects are required"));
    }
    Ok(())
}

/// Two-tailed paired t-test on `x - y`.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(validation("paired samples differ in length"));
    }
    check_subjects(x.len())?;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let md = mean(&d);
    let var = d.iter().map(|v| (v - md).powi(2)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;
    let (t, p) = if var == 0.0 {
        if md == 0.0 {
            (0.0, 1.0)
        } else {
            (md.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = md / (var / n).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (t, (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0))
    };
    Ok(TestResult {
        test: "paired_t".into(),
        statistic: t,
        df1: df,
        df2: None,
        p,
        correction: None,
    })
}

/// One-way repeated-measures ANOVA. `data[s][c]` is subject `s` under
/// condition `c`.
pub fn rm_anova(data: &[Vec<f64>]) -> Result<TestResult> {
    check_subjects(data.len())?;
    let k = data[0].len();
    if k < 2 || data.iter().any(|r| r.len() != k) {
        return Err(validation("every subject needs the same number (>= 2) of conditions"));
    }
    let n = data.len() as f64;
    let kf = k as f64;
    let grand = data.iter().flatten().sum::<f64>() / (n * kf);
    let cond_means: Vec<f64> = (0..k).map(|c| data.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let subj_means: Vec<f64> = data.iter().map(|r| mean(r)).collect();
    let ss_cond = n * cond_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_subj = kf * subj_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_total: f64 = data.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_err = ss_total - ss_cond - ss_subj;
    let df1 = kf - 1.0;
    let df2 = (kf - 1.0) * (n - 1.0);
    let (f, p) = if ss_err <= 1e-15 * ss_total.max(1.0) {
        if ss_cond == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ss_cond / df1) / (ss_err / df2);
        let dist = FisherSnedecor::new(df1, df2).expect("positive df");
        (f, 1.0 - dist.cdf(f))
    };
    Ok(TestResult {
        test: "rm_anova".into(),
        statistic: f,
        df1,
        df2: Some(df2),
        p,
        correction: None,
    })
}

/// Main effects and interaction of a 2×2 within-subject design via paired
/// contrasts; `cells[s] = [a1b1, a1b2, a2b1, a2b2]`. Each F equals the
/// squared t of its contrast, with df (1, n-1).
pub fn two_by_two(cells: &[[f64; 4]]) -> Result<Vec<TestResult>> {
    check_subjects(cells.len())?;
    let contrast = |name: &str, w: [f64; 4]| -> Result<TestResult> {
        let c: Vec<f64> = cells
            .iter()
            .map(|s| s.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / 2.0)
            .collect();
        let zeros = vec![0.0; c.len()];
        let t = paired_t(&c, &zeros)?;
        Ok(TestResult {
            test: name.into(),
            statistic: t.statistic * t.statistic,
            df1: 1.0,
            df2: Some(t.df1),
            p: t.p,
            correction: None,
        })
    };
    Ok(vec![
        contrast("main_effect_a", [1.0, 1.0, -1.0, -1.0])?,
        contrast("main_effect_b", [1.0, -1.0, 1.0, -1.0])?,
        contrast("interaction", [1.0, -1.0, -1.0, 1.0])?,
    ])
}

pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons as f64).min(1.0)
}

/// Applies the correction in place to a family of results.
pub fn bonferroni_all(results: &mut [TestResult]) {
    let m = results.len();
    for r in results {
        r.p = bonferroni(r.p, m);
        r.correction = Some(format!("bonferroni x{m}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let r = paired_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.statistic, r.p), (0.0, 1.0));
        assert!(paired_t(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn bonferroni_rule() {
        assert!((bonferroni(0.03, 3) - 0.09).abs() < 1e-15);
        assert_eq!(bonferroni(0.6, 3), 1.0);
    }

    #[test]
    fn two_way_f_is_squared_t() {
        let cells = [[1.0, 2.0, 3.0, 5.0], [2.0, 2.5, 3.0, 6.5], [0.5, 1.5, 2.0, 4.0]];
        let r = two_by_two(&cells).unwrap();
        let a: Vec<f64> = cells.iter().map(|c| (c[0] + c[1] - c[2] - c[3]) / 2.0).collect();
        let t = paired_t(&a, &[0.0; 3]).unwrap();
        assert!((r[0].statistic - t.statistic.powi(2)).abs() < 1e-12);
        assert_eq!(r[2].df2, Some(2.0));
    }
}
