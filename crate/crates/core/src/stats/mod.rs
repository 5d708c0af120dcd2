//! Statistics for outcome-metric selection and study analysis.

mod agreement;
mod hypothesis;
mod normality;
mod selection;

use crate::error::{Error, Result};

pub use agreement::{cohen_kappa, ibmd, icc, KappaWeighting, PairedRatings};
pub use hypothesis::{one_way_anova, paired_t_test, pearson, welch_t_test, Anova, Correlation, TTest, Tails};
pub use normality::{shapiro_wilk, ShapiroWilk};
pub use selection::uniform_coverage_select;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divisor `n − 1`).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n − 1)·p`, the default of R and NumPy). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Result of Tukey-fence outlier screening.
#[derive(Debug, Clone, PartialEq)]
pub struct IqrSplit {
    pub q1: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Indices into the input, in input order.
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

/// Removes values outside `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]`, with quartiles
/// from [`quantile_sorted`].
pub fn iqr_outliers(values: &[f64]) -> Result<IqrSplit> {
    if values.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "outlier screening needs at least 4 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value"));
    }
    let s = sorted(values);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lower_fence, upper_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let (kept, removed) = (0..values.len())
        .partition(|&i| (lower_fence..=upper_fence).contains(&values[i]));
    Ok(IqrSplit {
        q1,
        q3,
        lower_fence,
        upper_fence,
        kept,
        removed,
    })
}

pub(crate) fn require_len(xs: &[f64], min: usize, what: &str) -> Result<()> {
    if xs.len() < min {
        return Err(Error::InsufficientData(format!(
            "{what} needs at least {min} values, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite value")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quartiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
    }

    #[test]
    fn single_spike_is_removed() {
        let split = iqr_outliers(&[0.0, 0.0, 0.0, 0.0, 100.0]).unwrap();
        assert_eq!(split.removed, vec![4]);
        let flat = iqr_outliers(&[3.0; 6]).unwrap();
        assert!(flat.removed.is_empty());
        assert!(iqr_outliers(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn moments() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(mean(&xs), 5.0);
        assert_relative_eq!(variance(&xs), 32.0 / 7.0);
    }
}
