//! Choosing an outcome metric: normality of each candidate over a batch of
//! outcomes, correlation with expert error ratings, a representative subset
//! of outcomes for expert review, and agreement between the chosen metric
//! and the experts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{ExpertRating, ScoreReport, BATTERY_NAMES, ERROR_SCALE};
use crate::stats::{
    cohen_kappa, ibmd, icc, mean, pearson, shapiro_wilk, std_dev, uniform_coverage_select,
    Correlation, KappaWeighting, PairedRatings, ShapiroWilk,
};

/// Number of outcomes sent to expert review by default.
pub const DEFAULT_COVERAGE_K: usize = 20;

/// Every metric the comparison considers: the Dentist metric, then the
/// battery (which includes F1).
pub fn candidate_metrics() -> Vec<&'static str> {
    std::iter::once("dentist").chain(BATTERY_NAMES).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub k: usize,
    /// Metric whose scores the review subset should cover evenly.
    pub selection_metric: String,
    /// Metric compared against the experts for agreement.
    pub agreement_metric: String,
    pub kappa_weighting: KappaWeighting,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            k: DEFAULT_COVERAGE_K,
            selection_metric: "f1".into(),
            agreement_metric: "dentist".into(),
            kappa_weighting: KappaWeighting::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    /// Outcomes on which the metric is defined.
    pub defined: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub normality: Option<ShapiroWilk>,
    pub normality_error: Option<String>,
    pub expert_correlation: Option<Correlation>,
    pub correlation_error: Option<String>,
}

/// Agreement between two sets of 0–15 error ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub first: String,
    pub second: String,
    pub n: usize,
    pub ibmd: Option<f64>,
    pub kappa: Option<f64>,
    pub icc: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub outcomes: usize,
    pub options: CompareOptions,
    pub metrics: Vec<MetricSummary>,
    /// Metrics with an expert correlation, strongest `|R|` first.
    pub ranking: Vec<String>,
    /// Outcome ids picked for expert review, in selection order.
    pub selected: Vec<String>,
    pub selection_error: Option<String>,
    /// Chosen metric against the mean expert rating.
    pub metric_vs_experts: Option<Agreement>,
    /// Every pair of expert raters.
    pub rater_agreement: Vec<Agreement>,
    pub notes: Vec<String>,
}

impl MetricComparison {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

/// Mean expert rating per outcome id.
pub fn mean_expert_scores(ratings: &[ExpertRating]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in ratings {
        let e = sums.entry(r.outcome_id.clone()).or_default();
        e.0 += r.error_score;
        e.1 += 1;
    }
    sums.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect()
}

/// Ratings that share an outcome, paired in outcome order.
fn paired(first: &BTreeMap<String, f64>, second: &BTreeMap<String, f64>) -> Result<PairedRatings> {
    let (mut ids, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for (id, x) in first {
        if let Some(y) = second.get(id) {
            ids.push(id.clone());
            a.push(*x);
            b.push(*y);
        }
    }
    PairedRatings::new(ids, a, b)
}

fn agreement(first: &str, second: &str, p: Result<PairedRatings>, weighting: KappaWeighting) -> Agreement {
    let mut out = Agreement {
        first: first.into(),
        second: second.into(),
        n: 0,
        ibmd: None,
        kappa: None,
        icc: None,
        notes: Vec::new(),
    };
    let p = match p {
        Ok(p) => p,
        Err(e) => {
            out.notes.push(e.to_string());
            return out;
        }
    };
    out.n = p.len();
    let mut keep = |what: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            out.notes.push(format!("{what}: {e}"));
            None
        }
    };
    out.ibmd = keep("IBMD", ibmd(&p));
    out.kappa = keep("kappa", cohen_kappa(&p, weighting));
    out.icc = keep("ICC", icc(&p));
    out
}

/// Runs the metric-selection workflow over scored outcomes. Expert ratings
/// are optional; without them correlations and agreement are skipped with a
/// note.
pub fn compare_metrics(
    reports: &[ScoreReport],
    experts: Option<&[ExpertRating]>,
    options: &CompareOptions,
) -> Result<MetricComparison> {
    let names = candidate_metrics();
    for m in [&options.selection_metric, &options.agreement_metric] {
        if !names.contains(&m.as_str()) {
            return Err(Error::invalid(format!("unknown metric '{m}'")));
        }
    }
    let mut notes = Vec::new();
    let expert_means = experts.map(mean_expert_scores);
    if expert_means.is_none() {
        notes.push("no expert ratings: correlations and agreement skipped".to_string());
    }

    let metrics = names
        .iter()
        .map(|&name| {
            let scored: BTreeMap<String, f64> = reports
                .iter()
                .filter_map(|r| Some((r.outcome_id.clone(), r.score(name)?)))
                .collect();
            let values: Vec<f64> = scored.values().copied().collect();
            let normality = shapiro_wilk(&values);
            let correlation = expert_means.as_ref().map(|e| {
                let p = paired(&scored, e)?;
                pearson(&p.rater_a, &p.rater_b)
            });
            MetricSummary {
                name: name.to_string(),
                defined: values.len(),
                mean: (!values.is_empty()).then(|| mean(&values)),
                sd: (values.len() > 1).then(|| std_dev(&values)),
                normality_error: normality.as_ref().err().map(|e| e.to_string()),
                normality: normality.ok(),
                correlation_error: correlation.as_ref().and_then(|c| c.as_ref().err()).map(|e| e.to_string()),
                expert_correlation: correlation.and_then(|c| c.ok()),
            }
        })
        .collect::<Vec<_>>();

    let mut ranked: Vec<(&str, f64)> = metrics
        .iter()
        .filter_map(|m| Some((m.name.as_str(), m.expert_correlation?.r.abs())))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let ranking = ranked.into_iter().map(|(n, _)| n.to_string()).collect();

    let (ids, scores): (Vec<&str>, Vec<f64>) = reports
        .iter()
        .filter_map(|r| Some((r.outcome_id.as_str(), r.score(&options.selection_metric)?)))
        .unzip();
    let (selected, selection_error) = match uniform_coverage_select(&scores, options.k) {
        Ok(idx) => (idx.into_iter().map(|i| ids[i].to_string()).collect(), None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };

    let (metric_vs_experts, rater_agreement) = match (experts, &expert_means) {
        (Some(experts), Some(means)) => {
            let chosen: BTreeMap<String, f64> = reports
                .iter()
                .filter_map(|r| Some((r.outcome_id.clone(), r.score(&options.agreement_metric)?)))
                .collect();
            let vs = agreement(
                &options.agreement_metric,
                "experts",
                paired(&chosen, means),
                options.kappa_weighting,
            );
            let mut by_rater: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
            for r in experts {
                by_rater
                    .entry(r.rater_id.as_str())
                    .or_default()
                    .insert(r.outcome_id.clone(), r.error_score);
            }
            let raters: Vec<_> = by_rater.iter().collect();
            let mut pairs = Vec::new();
            for (i, (a, ra)) in raters.iter().enumerate() {
                for (b, rb) in &raters[i + 1..] {
                    pairs.push(agreement(a, b, paired(ra, rb), options.kappa_weighting));
                }
            }
            (Some(vs), pairs)
        }
        _ => (None, Vec::new()),
    };

    Ok(MetricComparison {
        outcomes: reports.len(),
        options: options.clone(),
        metrics,
        ranking,
        selected,
        selection_error,
        metric_vs_experts,
        rater_agreement,
        notes,
    })
}

/// Simulated expert panel: each rater scores an outcome as its Dentist
/// value, clipped to the rating scale, plus independent noise in
/// `[-noise, noise]`, rounded to half points and clipped again. Outcomes
/// without a Dentist score are left unrated.
pub fn synthetic_expert_ratings(
    reports: &[ScoreReport],
    raters: usize,
    noise: f64,
    seed: u64,
) -> Vec<ExpertRating> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in reports {
        let Some(d) = r.dentist else { continue };
        let base = d.value.clamp(0.0, ERROR_SCALE);
        for k in 0..raters {
            let jitter = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
            let score = ((base + jitter) * 2.0).round() / 2.0;
            out.push(ExpertRating {
                rater_id: format!("expert{}", k + 1),
                outcome_id: r.outcome_id.clone(),
                error_score: score.clamp(0.0, ERROR_SCALE),
            });
        }
    }
    out
}
