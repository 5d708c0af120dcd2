//! Per-outcome score reports, batch tables and expert ratings.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    dentist, f1, metric_battery, ClassificationCounts, DentistScore, MetricScore, BATTERY_NAMES,
    ERROR_SCALE,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub outcome_id: String,
    pub counts: ClassificationCounts,
    /// Absent when TP + FP or TP + FN is zero.
    pub dentist: Option<DentistScore>,
    pub f1: Option<f64>,
    pub battery: Vec<MetricScore>,
}

impl ScoreReport {
    pub fn new(outcome_id: impl Into<String>, counts: ClassificationCounts) -> Self {
        ScoreReport {
            outcome_id: outcome_id.into(),
            counts,
            dentist: dentist(&counts).ok(),
            f1: f1(&counts).ok(),
            battery: metric_battery(&counts),
        }
    }

    /// Battery value by name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.battery.iter().find(|m| m.name == name)?.value
    }

    /// Value of any scored quantity: `dentist`, `f1` or a battery metric.
    pub fn score(&self, name: &str) -> Option<f64> {
        match name {
            "dentist" => self.dentist.map(|d| d.value),
            "f1" => self.f1,
            other => self.metric(other),
        }
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per outcome; undefined values are left empty.
pub fn write_batch_csv(reports: &[ScoreReport], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = vec![
        "outcome_id",
        "tp",
        "tn",
        "fp",
        "fn",
        "precision_rescaled",
        "sensitivity_rescaled",
        "dentist",
        "dentist_closed_form",
        "dentist_out_of_range",
    ];
    header.extend(BATTERY_NAMES);
    out.write_record(&header)?;
    for r in reports {
        let c = &r.counts;
        let d = r.dentist.as_ref();
        let mut row = vec![
            r.outcome_id.clone(),
            c.tp.to_string(),
            c.tn.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            cell(d.map(|d| d.precision_rescaled)),
            cell(d.map(|d| d.sensitivity_rescaled)),
            cell(d.map(|d| d.value)),
            cell(d.map(|d| d.closed_form)),
            d.map(|d| d.out_of_range.to_string()).unwrap_or_default(),
        ];
        row.extend(r.battery.iter().map(|m| cell(m.value)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRating {
    pub rater_id: String,
    pub outcome_id: String,
    /// Error on the 0–15 scale.
    pub error_score: f64,
}

/// Reads a CSV with columns `rater_id,outcome_id,error_score`.
pub fn read_expert_ratings(r: impl Read) -> Result<Vec<ExpertRating>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (n, row) in reader.deserialize::<ExpertRating>().enumerate() {
        // Header is line 1.
        let line = n + 2;
        let rating = row.map_err(|e| Error::parse(line, e.to_string()))?;
        if !(0.0..=ERROR_SCALE).contains(&rating.error_score) {
            return Err(Error::parse(
                line,
                format!("error score {} outside [0, 15]", rating.error_score),
            ));
        }
        out.push(rating);
    }
    Ok(out)
}

pub fn write_expert_ratings(ratings: &[ExpertRating], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in ratings {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_through_json() {
        let r = ScoreReport::new("a", ClassificationCounts::new(9600, 0, 400, 0));
        let mut buf = Vec::new();
        r.write_json(&mut buf).unwrap();
        let back: ScoreReport = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.score("dentist"), r.score("dentist"));
        assert!(String::from_utf8(buf).unwrap().contains("\"fn\": 0"));
    }

    #[test]
    fn batch_table_shape() {
        let reports: Vec<_> = (0..3)
            .map(|i| ScoreReport::new(format!("o{i}"), ClassificationCounts::new(10 + i, 5, 1, i)))
            .chain([ScoreReport::new("empty", ClassificationCounts::new(0, 5, 0, 5))])
            .collect();
        let mut buf = Vec::new();
        write_batch_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 10 + 24);
        assert!(lines[4].starts_with("empty,0,5,0,5,,,,,,"));
    }

    #[test]
    fn expert_ratings_are_validated() {
        let good = "rater_id,outcome_id,error_score\nA,o1,3.5\nB,o1,4\n";
        assert_eq!(read_expert_ratings(good.as_bytes()).unwrap().len(), 2);
        let bad = "rater_id,outcome_id,error_score\nA,o1,3.5\nB,o1,16\n";
        let err = read_expert_ratings(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
