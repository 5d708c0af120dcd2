//! Volumetric drilling simulation and automated outcome scoring.
//!
//! The tooth is a pack of tissue-labelled spheres whose metaball field is
//! voxelised and meshed on a regular grid. Drilled outcomes are classified
//! voxel by voxel against an ideal reference and scored with the Dentist
//! metric, alongside a battery of confusion-matrix metrics. The crate also
//! carries the hand-tool calibration math, gaze analytics and the study
//! statistics used to analyse training outcomes.

pub mod calibration;
pub mod compare;
pub mod drill;
pub mod error;
pub mod exec;
pub mod field;
pub mod gaze;
pub mod fixture;
pub mod marching;
pub mod mesh;
pub mod scoring;
pub mod stats;
pub mod study;
pub mod volume;
pub mod voxel;

pub use calibration::{CalibrationConfig, CalibrationOffset, Pose};
pub use compare::{compare_metrics, CompareOptions, MetricComparison};
pub use drill::{apply_drill_step, replay, DrillScript, DrillStep};
pub use error::{Error, Result};
pub use exec::Execution;
pub use field::{build_field, sample_field, GridSpec, MetaballField, MetaballKernel, SampledField};
pub use gaze::{cyclops_ray, mean_eye_tooth_distance, pixel_footprint, tooth_hit, GazeSample, HmdConfig, TrialGazeLog};
pub use marching::extract_mesh;
pub use mesh::TriangleMesh;
pub use scoring::{classify, dentist, score_outcomes, ClassificationCounts, DentistScore, ScoreReport};
pub use stats::{KappaWeighting, Tails};
pub use study::{study_report, LearningRecord, StudyGroup, StudyReport};
pub use volume::{Aabb, Sphere, SpherePackVolume, Tissue};
pub use voxel::{voxelize, VoxelGrid};
