use serde::{Deserialize, Serialize};

use super::tdist::two_tailed_p;
use super::{mean, sample_sd, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Paired,
    Welch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub kind: TestKind,
    pub t: f64,
    pub df: f64,
    pub p_two_tailed: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub sd_a: f64,
    pub sd_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

fn finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Paired two-tailed t-test on a − b.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew { n });
    }
    finite(a)?;
    finite(b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let sd_d = sample_sd(&d);
    if sd_d == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let t = mean(&d) / (sd_d / (n as f64).sqrt());
    let df = (n - 1) as f64;
    Ok(TTestResult {
        kind: TestKind::Paired,
        t,
        df,
        p_two_tailed: two_tailed_p(t, df)?,
        mean_a: mean(a),
        mean_b: mean(b),
        sd_a: sample_sd(a),
        sd_b: sample_sd(b),
        n_a: n,
        n_b: n,
    })
}

/// Welch's unequal-variance two-tailed t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    for g in [a, b] {
        if g.len() < 2 {
            return Err(StatsError::TooFew { n: g.len() });
        }
        finite(g)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (sample_sd(a), sample_sd(b));
    let (va, vb) = (sa * sa / na, sb * sb / nb);
    if va + vb == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TTestResult {
        kind: TestKind::Welch,
        t,
        df,
        p_two_tailed: two_tailed_p(t, df)?,
        mean_a: mean(a),
        mean_b: mean(b),
        sd_a: sa,
        sd_b: sb,
        n_a: a.len(),
        n_b: b.len(),
    })
}
