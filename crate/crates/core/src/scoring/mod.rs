//! Voxel-level outcome classification and outcome scores.
//!
//! Labels follow the convention used throughout the scoring literature for
//! drilling simulators, which inverts the usual one: the *positive* class is
//! material that stays. Over voxels occupied in the pristine tooth,
//!
//! | label | outcome | ideal  |
//! |-------|---------|--------|
//! | TP    | kept    | kept   |
//! | TN    | drilled | drilled|
//! | FP    | kept    | drilled|
//! | FN    | drilled | kept   |
//!
//! so FP counts under-drilling and FN counts over-drilling.

mod battery;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::voxel::VoxelGrid;

pub use battery::{metric_battery, MetricScore, Orientation, BATTERY_NAMES};
pub use report::{
    read_expert_ratings, write_batch_csv, write_expert_ratings, ExpertRating, ScoreReport,
};

/// Lowest precision the Dentist metric treats as acceptable.
pub const PRECISION_FLOOR: f64 = 0.95;
/// Lowest sensitivity the Dentist metric treats as acceptable.
pub const SENSITIVITY_FLOOR: f64 = 0.2;
/// Weight of sensitivity relative to precision.
pub const SENSITIVITY_WEIGHT: f64 = 1.5;
/// Upper end of the expert error scale.
pub const ERROR_SCALE: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassificationCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassificationCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ClassificationCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Classifies every voxel of the pristine tooth.
pub fn classify(
    outcome: &VoxelGrid,
    ideal: &VoxelGrid,
    pristine: &VoxelGrid,
) -> Result<ClassificationCounts> {
    for (name, g) in [("outcome", outcome), ("ideal", ideal)] {
        if !g.grid().compatible(pristine.grid()) {
            return Err(Error::GridMismatch(format!(
                "{name} grid {:?} does not match pristine grid {:?}",
                g.dims(),
                pristine.dims()
            )));
        }
    }
    let created = outcome.count_not_in(pristine);
    if created > 0 {
        return Err(Error::MaterialCreation(created));
    }
    let stray = ideal.count_not_in(pristine);
    if stray > 0 {
        return Err(Error::invalid(format!(
            "ideal occupies {stray} voxels outside the pristine tooth"
        )));
    }
    let mut c = ClassificationCounts::default();
    let cells = outcome
        .cells()
        .iter()
        .zip(ideal.cells())
        .zip(pristine.cells());
    for ((&o, &i), &p) in cells {
        if p == 0 {
            continue;
        }
        match (o != 0, i != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Classifies and scores a batch of outcomes. Outcomes are independent, so
/// the batch is split across workers; reports come back in input order.
pub fn score_outcomes(
    outcomes: &[(String, VoxelGrid)],
    ideal: &VoxelGrid,
    pristine: &VoxelGrid,
    exec: Execution,
) -> Result<Vec<ScoreReport>> {
    map_indexed(exec, outcomes.len(), |i| {
        let (id, grid) = &outcomes[i];
        classify(grid, ideal, pristine).map(|c| ScoreReport::new(id.clone(), c))
    })
    .into_iter()
    .collect()
}

/// Precision `TP / (TP + FP)` and sensitivity `TP / (TP + FN)`.
pub fn precision_sensitivity(c: &ClassificationCounts) -> Result<(f64, f64)> {
    if c.tp + c.fp == 0 {
        return Err(Error::DegenerateCounts("TP + FP = 0"));
    }
    if c.tp + c.fn_ == 0 {
        return Err(Error::DegenerateCounts("TP + FN = 0"));
    }
    let tp = c.tp as f64;
    Ok((tp / (tp + c.fp as f64), tp / (tp + c.fn_ as f64)))
}

/// Dentist error score with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DentistScore {
    pub precision: f64,
    pub sensitivity: f64,
    /// Precision rescaled so that 0.95 maps to 0 and 1 maps to 1.
    pub precision_rescaled: f64,
    /// Sensitivity rescaled so that 0.2 maps to 0 and 1 maps to 1.
    pub sensitivity_rescaled: f64,
    /// Error on the 0–15 expert scale, from the rescaled terms.
    pub value: f64,
    /// The same error evaluated directly from the counts.
    pub closed_form: f64,
    /// True when `value` falls outside `[0, 15]`; the value is not clamped.
    pub out_of_range: bool,
}

/// Rescaled precision and sensitivity `(P̃, S̃)`.
pub fn rescale(precision: f64, sensitivity: f64) -> (f64, f64) {
    (
        (precision - PRECISION_FLOOR) / (1.0 - PRECISION_FLOOR),
        (sensitivity - SENSITIVITY_FLOOR) / (1.0 - SENSITIVITY_FLOOR),
    )
}

/// `15 · (1 − (1.5·S̃ + P̃) / 2.5)`.
pub fn dentist_compositional(c: &ClassificationCounts) -> Result<f64> {
    let (p, s) = precision_sensitivity(c)?;
    Ok(dentist_from_rates(p, s))
}

/// Dentist error for given precision and sensitivity.
pub fn dentist_from_rates(precision: f64, sensitivity: f64) -> f64 {
    let (pt, st) = rescale(precision, sensitivity);
    ERROR_SCALE * (1.0 - (SENSITIVITY_WEIGHT * st + pt) / (SENSITIVITY_WEIGHT + 1.0))
}

/// `15(32·FP·TP + 3·FN·TP + 35·FN·FP) / (4(TP+FN)(TP+FP))`.
pub fn dentist_closed_form(c: &ClassificationCounts) -> Result<f64> {
    precision_sensitivity(c)?;
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    let num = 15.0 * (32.0 * fp * tp + 3.0 * fn_ * tp + 35.0 * fn_ * fp);
    Ok(num / (4.0 * (tp + fn_) * (tp + fp)))
}

pub fn dentist(c: &ClassificationCounts) -> Result<DentistScore> {
    let (precision, sensitivity) = precision_sensitivity(c)?;
    let (precision_rescaled, sensitivity_rescaled) = rescale(precision, sensitivity);
    let value = dentist_from_rates(precision, sensitivity);
    Ok(DentistScore {
        precision,
        sensitivity,
        precision_rescaled,
        sensitivity_rescaled,
        value,
        closed_form: dentist_closed_form(c)?,
        out_of_range: !(0.0..=ERROR_SCALE).contains(&value),
    })
}

/// `2TP / (2TP + FP + FN)`.
pub fn f1(c: &ClassificationCounts) -> Result<f64> {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        return Err(Error::DegenerateCounts("2TP + FP + FN = 0"));
    }
    Ok(2.0 * c.tp as f64 / den as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::volume::{Aabb, Tissue};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new([n, n, n], &Aabb::new(Vector3::zeros(), Vector3::repeat(n as f64))).unwrap()
    }

    #[test]
    fn undrilled_tooth_against_cavity() {
        // 10000-voxel tooth with a 400-voxel cavity in the ideal.
        let g = GridSpec::new([25, 20, 20], &Aabb::new(Vector3::zeros(), Vector3::new(25.0, 20.0, 20.0))).unwrap();
        let pristine = VoxelGrid::from_fn(g, Tissue::Dentin, |_, _, _| true);
        let ideal = VoxelGrid::from_fn(g, Tissue::Dentin, |i, j, _| !(i < 5 && j < 4));
        let c = classify(&pristine, &ideal, &pristine).unwrap();
        assert_eq!(c, ClassificationCounts::new(9600, 0, 400, 0));
        let (p, s) = precision_sensitivity(&c).unwrap();
        assert_eq!((p, s), (0.96, 1.0));
        let d = dentist(&c).unwrap();
        assert_relative_eq!(d.value, 4.8, max_relative = 1e-12);
        assert_relative_eq!(d.closed_form, 4.8, max_relative = 1e-12);
        assert!(!d.out_of_range);
    }

    #[test]
    fn identical_outcome_scores_zero() {
        let g = grid(6);
        let pristine = VoxelGrid::from_fn(g, Tissue::Enamel, |i, _, _| i > 0);
        let ideal = VoxelGrid::from_fn(g, Tissue::Enamel, |i, j, _| i > 0 && j > 2);
        let c = classify(&ideal, &ideal, &pristine).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(c.total() as usize, pristine.occupied_count());
        assert_eq!(dentist(&c).unwrap().value, 0.0);
        assert_eq!(dentist_closed_form(&c).unwrap(), 0.0);
        assert_eq!(f1(&c).unwrap(), 1.0);
    }

    #[test]
    fn fully_drilled_outcome() {
        let g = grid(5);
        let pristine = VoxelGrid::from_fn(g, Tissue::Dentin, |_, _, k| k < 4);
        let ideal = VoxelGrid::from_fn(g, Tissue::Dentin, |_, _, k| k < 2);
        let c = classify(&VoxelGrid::empty(g), &ideal, &pristine).unwrap();
        assert_eq!(c, ClassificationCounts::new(0, 50, 0, 50));
        assert!(matches!(dentist(&c), Err(Error::DegenerateCounts(_))));
        assert_eq!(f1(&c).unwrap(), 0.0);
    }

    #[test]
    fn classify_rejects_bad_inputs() {
        let g = grid(4);
        let pristine = VoxelGrid::from_fn(g, Tissue::Dentin, |i, _, _| i < 2);
        let everything = VoxelGrid::from_fn(g, Tissue::Dentin, |_, _, _| true);
        assert!(matches!(
            classify(&everything, &pristine, &pristine),
            Err(Error::MaterialCreation(32))
        ));
        assert!(classify(&pristine, &everything, &pristine).is_err());
        let other = VoxelGrid::empty(grid(5));
        assert!(matches!(
            classify(&other, &pristine, &pristine),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn hand_evaluated_rates() {
        let (p, s) = precision_sensitivity(&ClassificationCounts::new(2, 0, 2, 6)).unwrap();
        assert_eq!((p, s), (0.5, 0.25));
        assert_relative_eq!(f1(&ClassificationCounts::new(2, 0, 1, 1)).unwrap(), 2.0 / 3.0);
        assert!(precision_sensitivity(&ClassificationCounts::new(0, 5, 0, 3)).is_err());
        assert!(f1(&ClassificationCounts::new(0, 5, 0, 0)).is_err());
    }

    #[test]
    fn rescale_anchors() {
        assert_eq!(dentist_from_rates(0.95, 0.2), 15.0);
        assert_eq!(dentist_from_rates(1.0, 1.0), 0.0);
    }

    #[test]
    fn low_precision_is_flagged_not_clamped() {
        // P = 0.5 is far below the floor.
        let d = dentist(&ClassificationCounts::new(10, 0, 10, 0)).unwrap();
        assert!(d.value > 15.0);
        assert!(d.out_of_range);
        assert_relative_eq!(d.value, d.closed_form, max_relative = 1e-12);
    }
}
