//! A fixed battery of 24 confusion-matrix metrics.
//!
//! Every metric declares whether higher is better (similarity) or lower is
//! better (error), and its range. A metric whose denominator vanishes is
//! reported as degenerate with no value instead of a NaN or infinity.

use serde::{Deserialize, Serialize};

use super::ClassificationCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Higher is better.
    Similarity,
    /// Lower is better.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: String,
    /// `None` when the metric is undefined for these counts.
    pub value: Option<f64>,
    pub orientation: Orientation,
    /// Closed interval; the upper end may be infinite (`null` in JSON).
    #[serde(with = "range_serde")]
    pub range: (f64, f64),
    pub degenerate: bool,
    pub out_of_range: bool,
}

/// Battery order; also the column order of batch tables.
pub const BATTERY_NAMES: [&str; 24] = [
    "accuracy",
    "balanced_accuracy",
    "error_rate",
    "precision",
    "sensitivity",
    "specificity",
    "negative_predictive_value",
    "false_positive_rate",
    "false_negative_rate",
    "false_discovery_rate",
    "false_omission_rate",
    "f1",
    "f2",
    "f0_5",
    "jaccard",
    "matthews_correlation",
    "informedness",
    "markedness",
    "fowlkes_mallows",
    "cohen_kappa",
    "pabak",
    "geometric_mean",
    "positive_likelihood_ratio",
    "diagnostic_odds_ratio",
];

mod range_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &(f64, f64), s: S) -> Result<S::Ok, S::Error> {
        (r.0, r.1.is_finite().then_some(r.1)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(f64, f64), D::Error> {
        let (lo, hi) = <(f64, Option<f64>)>::deserialize(d)?;
        Ok((lo, hi.unwrap_or(f64::INFINITY)))
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

fn f_beta(tp: f64, fp: f64, fn_: f64, beta: f64) -> Option<f64> {
    let b2 = beta * beta;
    ratio((1.0 + b2) * tp, (1.0 + b2) * tp + b2 * fn_ + fp)
}

pub fn metric_battery(c: &ClassificationCounts) -> Vec<MetricScore> {
    use Orientation::{Error as Err, Similarity as Sim};

    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let n = tp + tn + fp + fn_;
    let tpr = ratio(tp, tp + fn_);
    let tnr = ratio(tn, tn + fp);
    let ppv = ratio(tp, tp + fp);
    let npv = ratio(tn, tn + fn_);
    let fpr = ratio(fp, fp + tn);
    let accuracy = ratio(tp + tn, n);
    let both = |a: Option<f64>, b: Option<f64>, f: fn(f64, f64) -> f64| Some(f(a?, b?));

    let kappa = accuracy.and_then(|po| {
        let pe = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
        ratio(po - pe, 1.0 - pe)
    });
    let mcc = {
        let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        ratio(tp * tn - fp * fn_, den.sqrt())
    };
    let lr_pos = both(tpr, fpr, |a, b| a / b).filter(|v| v.is_finite());

    let unit = (0.0, 1.0);
    let signed = (-1.0, 1.0);
    let open = (0.0, f64::INFINITY);
    let rows: [(Option<f64>, Orientation, (f64, f64)); 24] = [
        (accuracy, Sim, unit),
        (both(tpr, tnr, |a, b| 0.5 * (a + b)), Sim, unit),
        (accuracy.map(|a| 1.0 - a), Err, unit),
        (ppv, Sim, unit),
        (tpr, Sim, unit),
        (tnr, Sim, unit),
        (npv, Sim, unit),
        (fpr, Err, unit),
        (ratio(fn_, fn_ + tp), Err, unit),
        (ratio(fp, fp + tp), Err, unit),
        (ratio(fn_, fn_ + tn), Err, unit),
        (f_beta(tp, fp, fn_, 1.0), Sim, unit),
        (f_beta(tp, fp, fn_, 2.0), Sim, unit),
        (f_beta(tp, fp, fn_, 0.5), Sim, unit),
        (ratio(tp, tp + fp + fn_), Sim, unit),
        (mcc, Sim, signed),
        (both(tpr, tnr, |a, b| a + b - 1.0), Sim, signed),
        (both(ppv, npv, |a, b| a + b - 1.0), Sim, signed),
        (both(ppv, tpr, |a, b| (a * b).sqrt()), Sim, unit),
        (kappa, Sim, signed),
        (accuracy.map(|a| 2.0 * a - 1.0), Sim, signed),
        (both(tpr, tnr, |a, b| (a * b).sqrt()), Sim, unit),
        (lr_pos, Sim, open),
        (ratio(tp * tn, fp * fn_), Sim, open),
    ];

    BATTERY_NAMES
        .iter()
        .zip(rows)
        .map(|(name, (value, orientation, range))| {
            let value = value.filter(|v| v.is_finite());
            let tol = 1e-12;
            MetricScore {
                name: (*name).to_string(),
                value,
                orientation,
                range,
                degenerate: value.is_none(),
                out_of_range: value.is_some_and(|v| v < range.0 - tol || v > range.1 + tol),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    fn value(scores: &[MetricScore], name: &str) -> Option<f64> {
        scores.iter().find(|m| m.name == name).unwrap().value
    }

    #[test]
    fn twenty_four_unique_names() {
        let b = metric_battery(&ClassificationCounts::new(3, 4, 5, 6));
        assert_eq!(b.len(), 24);
        let names: HashSet<_> = b.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names.len(), 24);
    }

    #[test]
    fn balanced_counts() {
        let b = metric_battery(&ClassificationCounts::new(25, 25, 25, 25));
        assert_eq!(value(&b, "accuracy"), Some(0.5));
        assert_eq!(value(&b, "matthews_correlation"), Some(0.0));
        assert_eq!(value(&b, "cohen_kappa"), Some(0.0));
        assert_eq!(value(&b, "pabak"), Some(0.0));
        assert_eq!(value(&b, "diagnostic_odds_ratio"), Some(1.0));
    }

    #[test]
    fn perfect_outcome_maximises_similarities() {
        let b = metric_battery(&ClassificationCounts::new(900, 100, 0, 0));
        for m in &b {
            match (m.orientation, m.value) {
                (Orientation::Similarity, Some(v)) => assert_eq!(v, m.range.1, "{}", m.name),
                (Orientation::Similarity, None) => {
                    // Only unbounded ratios divide by a zero error count.
                    assert!(m.range.1.is_infinite(), "{}", m.name);
                }
                (Orientation::Error, v) => assert_eq!(v, Some(0.0), "{}", m.name),
            }
        }
    }

    #[test]
    fn degenerate_metrics_carry_no_value() {
        let b = metric_battery(&ClassificationCounts::new(10, 0, 0, 5));
        assert!(b.iter().find(|m| m.name == "specificity").unwrap().degenerate);
        assert!(value(&b, "specificity").is_none());
        assert!(b.iter().all(|m| m.value.is_none_or(f64::is_finite)));
    }

    #[test]
    fn hand_evaluated_mixture() {
        let c = ClassificationCounts::new(40, 30, 10, 20);
        let b = metric_battery(&c);
        assert_relative_eq!(value(&b, "accuracy").unwrap(), 0.7);
        assert_relative_eq!(value(&b, "precision").unwrap(), 0.8);
        assert_relative_eq!(value(&b, "sensitivity").unwrap(), 40.0 / 60.0);
        assert_relative_eq!(value(&b, "specificity").unwrap(), 0.75);
        assert_relative_eq!(value(&b, "jaccard").unwrap(), 40.0 / 70.0);
        assert_relative_eq!(value(&b, "f2").unwrap(), 200.0 / 290.0);
        let mcc = (40.0 * 30.0 - 10.0 * 20.0) / (50.0f64 * 60.0 * 40.0 * 50.0).sqrt();
        assert_relative_eq!(value(&b, "matthews_correlation").unwrap(), mcc);
        assert_relative_eq!(value(&b, "diagnostic_odds_ratio").unwrap(), 6.0);
        assert!(b.iter().all(|m| !m.out_of_range));
    }
}
