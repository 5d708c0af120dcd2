use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two raters scoring the same outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRatings {
    pub outcome_ids: Vec<String>,
    pub rater_a: Vec<f64>,
    pub rater_b: Vec<f64>,
}

impl PairedRatings {
    pub fn new(outcome_ids: Vec<String>, rater_a: Vec<f64>, rater_b: Vec<f64>) -> Result<Self> {
        if rater_a.len() != rater_b.len() || outcome_ids.len() != rater_a.len() {
            return Err(Error::invalid(format!(
                "paired ratings differ in length ({} ids, {} and {} scores)",
                outcome_ids.len(),
                rater_a.len(),
                rater_b.len()
            )));
        }
        if rater_a.len() < 2 {
            return Err(Error::InsufficientData("need at least 2 rated outcomes".into()));
        }
        if rater_a.iter().chain(&rater_b).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite rating"));
        }
        Ok(PairedRatings {
            outcome_ids,
            rater_a,
            rater_b,
        })
    }

    /// Ratings with generated ids `0, 1, …`.
    pub fn unlabeled(rater_a: Vec<f64>, rater_b: Vec<f64>) -> Result<Self> {
        let ids = (0..rater_a.len()).map(|i| i.to_string()).collect();
        PairedRatings::new(ids, rater_a, rater_b)
    }

    pub fn len(&self) -> usize {
        self.rater_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rater_a.is_empty()
    }

    pub fn swapped(&self) -> PairedRatings {
        PairedRatings {
            outcome_ids: self.outcome_ids.clone(),
            rater_a: self.rater_b.clone(),
            rater_b: self.rater_a.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaWeighting {
    None,
    #[default]
    Linear,
    Quadratic,
}

impl FromStr for KappaWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "unweighted" => Ok(KappaWeighting::None),
            "linear" => Ok(KappaWeighting::Linear),
            "quadratic" => Ok(KappaWeighting::Quadratic),
            other => Err(Error::invalid(format!(
                "unknown kappa weighting '{other}' (expected none, linear or quadratic)"
            ))),
        }
    }
}

/// Cohen's kappa on ratings rounded to the nearest integer.
///
/// Categories are the contiguous integers between the smallest and largest
/// rounded rating of either rater. Weighted variants credit partial agreement
/// `1 − |i − j| / (K − 1)` (linear) or `1 − (i − j)² / (K − 1)²` (quadratic).
pub fn cohen_kappa(p: &PairedRatings, weighting: KappaWeighting) -> Result<f64> {
    let a: Vec<i64> = p.rater_a.iter().map(|v| v.round() as i64).collect();
    let b: Vec<i64> = p.rater_b.iter().map(|v| v.round() as i64).collect();
    let lo = *a.iter().chain(&b).min().expect("nonempty");
    let hi = *a.iter().chain(&b).max().expect("nonempty");
    if lo == hi {
        return Err(Error::UndefinedExpectedAgreement);
    }
    let k = (hi - lo + 1) as usize;
    let n = a.len() as f64;
    let mut table = vec![0.0; k * k];
    let mut row = vec![0.0; k];
    let mut col = vec![0.0; k];
    for (&x, &y) in a.iter().zip(&b) {
        let (i, j) = ((x - lo) as usize, (y - lo) as usize);
        table[i * k + j] += 1.0;
        row[i] += 1.0;
        col[j] += 1.0;
    }
    let span = (k - 1) as f64;
    // Disagreement weights: 1 - agreement weight.
    let penalty = |i: usize, j: usize| -> f64 {
        let d = i.abs_diff(j) as f64;
        match weighting {
            KappaWeighting::None => f64::from(u8::from(i != j)),
            KappaWeighting::Linear => d / span,
            KappaWeighting::Quadratic => (d * d) / (span * span),
        }
    };
    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let v = penalty(i, j);
            observed += v * table[i * k + j] / n;
            expected += v * row[i] * col[j] / (n * n);
        }
    }
    if expected <= 0.0 {
        return Err(Error::UndefinedExpectedAgreement);
    }
    Ok(1.0 - observed / expected)
}

/// Two-way random-effects, absolute-agreement, single-rater ICC(2,1).
pub fn icc(p: &PairedRatings) -> Result<f64> {
    let n = p.len() as f64;
    let k = 2.0;
    let rows: Vec<f64> = p
        .rater_a
        .iter()
        .zip(&p.rater_b)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let col_a = p.rater_a.iter().sum::<f64>() / n;
    let col_b = p.rater_b.iter().sum::<f64>() / n;
    let grand = 0.5 * (col_a + col_b);
    let ms_rows = k * rows.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n - 1.0);
    let ms_cols = n * ((col_a - grand).powi(2) + (col_b - grand).powi(2)) / (k - 1.0);
    let ss_err: f64 = p
        .rater_a
        .iter()
        .zip(&p.rater_b)
        .zip(&rows)
        .map(|((a, b), m)| (a - m - col_a + grand).powi(2) + (b - m - col_b + grand).powi(2))
        .sum();
    let ms_err = ss_err / ((n - 1.0) * (k - 1.0));
    if ms_rows == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((ms_rows - ms_err) / (ms_rows + (k - 1.0) * ms_err + k * (ms_cols - ms_err) / n))
}

/// Information-based measure of disagreement: the mean over outcomes of
/// `log2(|a − b| / max(a, b) + 1)`, with pairs of zeros contributing 0.
pub fn ibmd(p: &PairedRatings) -> Result<f64> {
    let mut sum = 0.0;
    for (&a, &b) in p.rater_a.iter().zip(&p.rater_b) {
        if a < 0.0 || b < 0.0 {
            return Err(Error::invalid(format!("negative rating ({a}, {b})")));
        }
        let m = a.max(b);
        if m > 0.0 {
            sum += ((a - b).abs() / m + 1.0).log2();
        }
    }
    Ok(sum / p.len() as f64)
}
