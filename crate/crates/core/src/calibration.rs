//! Hand-tool alignment: placing the tracked controller so that the virtual
//! tools coincide with the physical haptic handles.
//!
//! Orientations are per-axis Euler angles in degrees that are added and
//! subtracted componentwise. Positions are in centimetres.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn normalize_angle(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// `a - b` wrapped into `(-180, 180]`.
pub fn angle_delta(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

fn normalize_euler(v: &Vector3<f64>) -> Vector3<f64> {
    v.map(normalize_angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    /// Per-axis Euler angles in degrees.
    pub orientation: Vector3<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: Vector3<f64>) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn at(position: Vector3<f64>) -> Self {
        Pose::new(position, Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.orientation.iter()).all(|v| v.is_finite())
    }

    pub fn normalized(&self) -> Pose {
        Pose::new(self.position, normalize_euler(&self.orientation))
    }

    /// Applies a correction: translation added, angles added and wrapped.
    pub fn corrected_by(&self, delta: &Pose) -> Pose {
        Pose::new(
            self.position + delta.position,
            normalize_euler(&(self.orientation + delta.orientation)),
        )
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.position;
        let o = &self.orientation;
        write!(
            f,
            "p=({}, {}, {}) θ=({}, {}, {})",
            p.x, p.y, p.z, o.x, o.y, o.z
        )
    }
}

/// Hand-measured offset from the mirror device origin to the controller dock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOffset {
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
}

impl CalibrationOffset {
    /// The offset of the reference setup: (22, 26, −7) cm and (0, 0, 90)°.
    pub fn reference() -> Self {
        CalibrationOffset {
            translation: Vector3::new(22.0, 26.0, -7.0),
            rotation: Vector3::new(0.0, 0.0, 90.0),
        }
    }

    pub fn zero() -> Self {
        CalibrationOffset {
            translation: Vector3::zeros(),
            rotation: Vector3::zeros(),
        }
    }
}

/// Target controller pose: mirror origin plus offset, angles wrapped.
pub fn target_controller_pose(mirror: &Pose, offset: &CalibrationOffset) -> Pose {
    Pose::new(
        mirror.position + offset.translation,
        normalize_euler(&(mirror.orientation + offset.rotation)),
    )
}

/// Correction added to the VR camera so the measured controller lands on the
/// target: `p_target − p_measured` and the wrapped angle difference.
pub fn camera_correction(target: &Pose, measured: &Pose) -> Pose {
    Pose::new(
        target.position - measured.position,
        Vector3::from_fn(|a, _| angle_delta(target.orientation[a], measured.orientation[a])),
    )
}

/// Positional (Euclidean, cm) and angular (largest wrapped per-axis
/// difference, degrees) error between two poses.
pub fn alignment_residual(target: &Pose, achieved: &Pose) -> (f64, f64) {
    let pos = (target.position - achieved.position).norm();
    let ang = (0..3)
        .map(|a| angle_delta(target.orientation[a], achieved.orientation[a]).abs())
        .fold(0.0, f64::max);
    (pos, ang)
}

/// A signed world axis such as `+x` or `-z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedAxis {
    pub axis: usize,
    pub negative: bool,
}

impl SignedAxis {
    pub fn unit(&self) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        v[self.axis] = if self.negative { -1.0 } else { 1.0 };
        v
    }
}

impl FromStr for SignedAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (negative, name) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let axis = match name {
            "x" | "X" => 0,
            "y" | "Y" => 1,
            "z" | "Z" => 2,
            _ => return Err(Error::invalid(format!("unknown axis '{s}'"))),
        };
        Ok(SignedAxis { axis, negative })
    }
}

impl fmt::Display for SignedAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.negative { '-' } else { '+' };
        write!(f, "{sign}{}", ['x', 'y', 'z'][self.axis])
    }
}

impl Serialize for SignedAxis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SignedAxis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Table frame declaring which world directions are "down" and "forward".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableFrame {
    pub down: SignedAxis,
    pub forward: SignedAxis,
}

impl TableFrame {
    pub fn new(down: SignedAxis, forward: SignedAxis) -> Result<Self> {
        if down.axis == forward.axis {
            return Err(Error::invalid("down and forward must be different axes"));
        }
        Ok(TableFrame { down, forward })
    }

    pub fn parse(down: &str, forward: &str) -> Result<Self> {
        TableFrame::new(down.parse()?, forward.parse()?)
    }
}

/// Physical displacement of the haptic devices in the misaligned condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misalignment {
    /// Centimetres along the frame's down axis.
    pub down: f64,
    /// Centimetres along the frame's forward axis.
    pub forward: f64,
}

impl Default for Misalignment {
    fn default() -> Self {
        Misalignment {
            down: 20.0,
            forward: 50.0,
        }
    }
}

impl Misalignment {
    pub fn inverse(&self) -> Misalignment {
        Misalignment {
            down: -self.down,
            forward: -self.forward,
        }
    }
}

/// Moves a device pose by the misalignment offset in a declared table frame.
/// Orientation is unchanged.
pub fn apply_misalignment(
    device: &Pose,
    frame: Option<&TableFrame>,
    offset: &Misalignment,
) -> Result<Pose> {
    let frame = frame.ok_or_else(|| Error::invalid("no table frame declared"))?;
    let shift = frame.down.unit() * offset.down + frame.forward.unit() * offset.forward;
    Ok(Pose::new(device.position + shift, device.orientation))
}

/// The full alignment chain for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentChain {
    pub mirror: Pose,
    pub target: Pose,
    pub measured: Pose,
    pub camera_delta: Pose,
    pub corrected: Pose,
    pub residual_cm: f64,
    pub residual_deg: f64,
    /// How far componentwise angle addition strays from composing the two
    /// rotations; see [`euler_sum_gap`].
    #[serde(default)]
    pub euler_sum_gap_deg: f64,
}

fn rotation(euler_deg: &Vector3<f64>) -> Rotation3<f64> {
    let r = euler_deg.map(f64::to_radians);
    Rotation3::from_euler_angles(r.x, r.y, r.z)
}

/// Angle in degrees between the rotation of the componentwise angle sum and
/// the composed rotation `R(mirror) · R(offset)`, reading each triple as
/// roll, pitch and yaw about x, y and z. Zero when the two agree, for example
/// when either orientation is a pure rotation about one axis shared by both.
/// Reported only; the alignment itself always uses the componentwise sum.
pub fn euler_sum_gap(mirror: &Vector3<f64>, offset: &Vector3<f64>) -> f64 {
    let summed = rotation(&(mirror + offset));
    let composed = rotation(mirror) * rotation(offset);
    summed.angle_to(&composed).to_degrees()
}

pub fn alignment_chain(mirror: &Pose, offset: &CalibrationOffset, measured: &Pose) -> AlignmentChain {
    let target = target_controller_pose(mirror, offset);
    let camera_delta = camera_correction(&target, measured);
    let corrected = measured.corrected_by(&camera_delta);
    let (residual_cm, residual_deg) = alignment_residual(&target, &corrected);
    AlignmentChain {
        mirror: *mirror,
        target,
        measured: *measured,
        camera_delta,
        corrected,
        residual_cm,
        residual_deg,
        euler_sum_gap_deg: euler_sum_gap(&mirror.orientation, &offset.rotation),
    }
}

/// Calibration setup read from a JSON file. The drill origin is kept for
/// reference only; no alignment step uses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub mirror_origin: Pose,
    #[serde(default)]
    pub drill_origin: Option<Pose>,
    #[serde(default = "CalibrationOffset::reference")]
    pub offset: CalibrationOffset,
    /// Controller pose reported by the tracker while docked.
    pub measured: Pose,
    #[serde(default)]
    pub frame: Option<TableFrame>,
    /// Shift of the haptic device for the misaligned condition.
    #[serde(default)]
    pub misalignment: Option<Misalignment>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationAudit {
    pub chain: AlignmentChain,
    pub drill_origin: Option<Pose>,
    /// Mirror origin after the misalignment shift, when one is configured.
    pub misaligned_mirror: Option<Pose>,
}

impl CalibrationConfig {
    pub fn read_json(r: impl std::io::Read) -> Result<Self> {
        let c: CalibrationConfig = serde_json::from_reader(r)?;
        if !(c.mirror_origin.is_finite() && c.measured.is_finite()) {
            return Err(Error::invalid("non-finite pose in calibration config"));
        }
        if c.misalignment.is_some() && c.frame.is_none() {
            return Err(Error::invalid("misalignment needs a table frame"));
        }
        Ok(c)
    }

    pub fn audit(&self) -> Result<CalibrationAudit> {
        let misaligned_mirror = self
            .misalignment
            .map(|m| apply_misalignment(&self.mirror_origin, self.frame.as_ref(), &m))
            .transpose()?;
        Ok(CalibrationAudit {
            chain: alignment_chain(&self.mirror_origin, &self.offset, &self.measured),
            drill_origin: self.drill_origin,
            misaligned_mirror,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn normalization_boundaries() {
        assert_eq!(normalize_angle(180.0), 180.0);
        assert_eq!(normalize_angle(-180.0), 180.0);
        assert_eq!(normalize_angle(190.0), -170.0);
        assert_eq!(normalize_angle(340.0), -20.0);
        assert_eq!(normalize_angle(-540.0), 180.0);
        assert_eq!(normalize_angle(720.0), 0.0);
        assert!(normalize_angle(-1e-20) <= 180.0);
    }

    #[test]
    fn reference_offset_from_origin() {
        let t = target_controller_pose(&Pose::at(Vector3::zeros()), &CalibrationOffset::reference());
        assert_eq!(t.position, v(22.0, 26.0, -7.0));
        assert_eq!(t.orientation, v(0.0, 0.0, 90.0));
    }

    #[test]
    fn zero_offset_is_identity() {
        let m = Pose::new(v(1.0, -2.0, 3.5), v(10.0, -20.0, 170.0));
        assert_eq!(target_controller_pose(&m, &CalibrationOffset::zero()), m);
    }

    #[test]
    fn target_angle_wraps() {
        let m = Pose::new(Vector3::zeros(), v(0.0, 0.0, 100.0));
        let t = target_controller_pose(&m, &CalibrationOffset::reference());
        assert_eq!(t.orientation, v(0.0, 0.0, -170.0));
    }

    #[test]
    fn camera_correction_examples() {
        let p = Pose::new(v(1.0, 2.0, 3.0), v(4.0, 5.0, 6.0));
        assert_eq!(camera_correction(&p, &p), Pose::at(Vector3::zeros()));
        let t = Pose::new(v(22.0, 26.0, -7.0), v(0.0, 170.0, 0.0));
        let m = Pose::new(v(20.0, 20.0, 0.0), v(0.0, -170.0, 0.0));
        let d = camera_correction(&t, &m);
        assert_eq!(d.position, v(2.0, 6.0, -7.0));
        assert_eq!(d.orientation, v(0.0, -20.0, 0.0));
    }

    #[test]
    fn misalignment_moves_down_and_forward() {
        let frame = TableFrame::parse("-z", "+x").unwrap();
        let off = Misalignment::default();
        let origin = Pose::at(Vector3::zeros());
        let once = apply_misalignment(&origin, Some(&frame), &off).unwrap();
        assert_eq!(once.position, v(50.0, 0.0, -20.0));
        let twice = apply_misalignment(&once, Some(&frame), &off).unwrap();
        assert_eq!(twice.position, v(100.0, 0.0, -40.0));
        let back = apply_misalignment(&once, Some(&frame), &off.inverse()).unwrap();
        assert_eq!(back, origin);
    }

    #[test]
    fn misalignment_requires_frame() {
        let origin = Pose::at(Vector3::zeros());
        assert!(apply_misalignment(&origin, None, &Misalignment::default()).is_err());
        assert!(TableFrame::parse("-z", "+z").is_err());
        assert!("w".parse::<SignedAxis>().is_err());
    }

    #[test]
    fn residual_examples() {
        let p = Pose::new(v(1.0, 2.0, 3.0), v(0.0, 0.0, 0.0));
        assert_eq!(alignment_residual(&p, &p), (0.0, 0.0));
        let q = Pose::new(v(2.0, 2.0, 3.0), v(0.0, 0.0, 0.0));
        assert_eq!(alignment_residual(&p, &q), (1.0, 0.0));
        let r = Pose::new(v(1.0, 2.0, 3.0), v(0.0, 0.0, 350.0));
        let (_, ang) = alignment_residual(&p, &r);
        assert!((ang - 10.0).abs() < 1e-12);
    }

    #[test]
    fn euler_sum_gap_cases() {
        assert!(euler_sum_gap(&v(0.0, 0.0, 30.0), &v(0.0, 0.0, 90.0)) < 1e-9);
        assert!(euler_sum_gap(&v(0.0, 0.0, 0.0), &v(10.0, 20.0, 90.0)) < 1e-9);
        // Quarter turns about x then z do not commute.
        let g = euler_sum_gap(&v(90.0, 0.0, 0.0), &v(0.0, 0.0, 90.0));
        assert!(g > 60.0, "{g}");
    }

    #[test]
    fn config_audit() {
        let text = r#"{
            "mirror_origin": {"position": [0, 0, 0], "orientation": [0, 0, 0]},
            "drill_origin": {"position": [0, 0, 30], "orientation": [0, 0, 0]},
            "measured": {"position": [20, 20, 0], "orientation": [0, 0, 80]},
            "frame": {"down": "-z", "forward": "+x"},
            "misalignment": {"down": 20, "forward": 50}
        }"#;
        let c = CalibrationConfig::read_json(text.as_bytes()).unwrap();
        assert_eq!(c.offset, CalibrationOffset::reference());
        let a = c.audit().unwrap();
        assert_eq!(a.chain.camera_delta.position, v(2.0, 6.0, -7.0));
        assert_eq!(a.chain.camera_delta.orientation, v(0.0, 0.0, 10.0));
        assert_eq!(a.chain.residual_cm, 0.0);
        assert_eq!(a.misaligned_mirror.unwrap().position, v(50.0, 0.0, -20.0));
        let no_frame = text.replace(r#""frame": {"down": "-z", "forward": "+x"},"#, "");
        assert!(CalibrationConfig::read_json(no_frame.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent_and_bounded(a in -1e5f64..1e5) {
            let n = normalize_angle(a);
            prop_assert!(n > -180.0 && n <= 180.0);
            prop_assert_eq!(normalize_angle(n), n);
        }

        #[test]
        fn correction_round_trip(
            m in prop::array::uniform3(-100.0f64..100.0),
            mo in prop::array::uniform3(-720.0f64..720.0),
            c in prop::array::uniform3(-100.0f64..100.0),
            co in prop::array::uniform3(-720.0f64..720.0),
        ) {
            let mirror = Pose::new(Vector3::from(m), Vector3::from(mo));
            let measured = Pose::new(Vector3::from(c), Vector3::from(co));
            let chain = alignment_chain(&mirror, &CalibrationOffset::reference(), &measured);
            prop_assert!(chain.residual_cm < 1e-9);
            prop_assert!(chain.residual_deg < 1e-9);
        }
    }
}
