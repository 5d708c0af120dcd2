//! Gaze analytics: cyclops-eye rays, tooth hits, eye–tooth distance and the
//! on-screen footprint of the tooth.
//!
//! Positions are in centimetres in the world frame.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::mesh::TriangleMesh;

/// Tolerance on the length of a logged gaze direction.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    /// Seconds since the start of the trial.
    pub timestamp: f64,
    pub left_eye: Vector3<f64>,
    pub right_eye: Vector3<f64>,
    /// Unit gaze direction.
    pub direction: Vector3<f64>,
    /// Where the gaze met the tooth, if it did.
    pub hit: Option<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Ray from the midpoint between the eyes along the logged gaze direction.
pub fn cyclops_ray(s: &GazeSample) -> Result<Ray> {
    let len = s.direction.norm();
    if (len - 1.0).abs() > UNIT_TOLERANCE || len.is_nan() {
        return Err(Error::invalid(format!("gaze direction has length {len}, expected 1")));
    }
    Ok(Ray {
        origin: (s.left_eye + s.right_eye) * 0.5,
        direction: s.direction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub point: Vector3<f64>,
    /// Distance from the ray origin to `point`.
    pub distance: f64,
}

/// Möller–Trumbore; returns the ray parameter of the intersection.
fn intersect_triangle(ray: &Ray, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<f64> {
    const EPS: f64 = 1e-12;
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.direction.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t >= 0.0).then_some(t)
}

/// Nearest intersection of the ray with the mesh at `t ≥ 0`.
pub fn tooth_hit(ray: &Ray, mesh: &TriangleMesh) -> Option<Hit> {
    let v = &mesh.vertices;
    let t = mesh
        .triangles
        .iter()
        .filter_map(|tri| {
            intersect_triangle(ray, &v[tri[0] as usize], &v[tri[1] as usize], &v[tri[2] as usize])
        })
        .min_by(f64::total_cmp)?;
    let point = ray.at(t);
    Some(Hit {
        point,
        distance: (point - ray.origin).norm(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialGazeLog {
    pub trial_id: String,
    pub tooth_center: Vector3<f64>,
    pub samples: Vec<GazeSample>,
}

impl TrialGazeLog {
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            cyclops_ray(s).map_err(|e| Error::invalid(format!("trial {} sample {i}: {e}", self.trial_id)))?;
        }
        if let Some(w) = self.samples.windows(2).find(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::invalid(format!(
                "trial {}: timestamp {} follows {}",
                self.trial_id, w[1].timestamp, w[0].timestamp
            )));
        }
        Ok(())
    }

    pub fn hit_count(&self) -> usize {
        self.samples.iter().filter(|s| s.hit.is_some()).count()
    }

    /// Replaces the logged hits by casting every sample's cyclops ray
    /// against `mesh`.
    pub fn with_hits_from(&self, mesh: &TriangleMesh, exec: Execution) -> Result<TrialGazeLog> {
        let rays = self.samples.iter().map(cyclops_ray).collect::<Result<Vec<_>>>()?;
        let hits = map_slice(exec, &rays, |r| tooth_hit(r, mesh).map(|h| h.point));
        let samples = self
            .samples
            .iter()
            .zip(hits)
            .map(|(s, hit)| GazeSample { hit, ..*s })
            .collect();
        Ok(TrialGazeLog {
            samples,
            ..self.clone()
        })
    }
}

/// Mean distance from the cyclops eye to the hit point over all hits.
pub fn mean_eye_tooth_distance(log: &TrialGazeLog) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in &log.samples {
        if let Some(hit) = s.hit {
            sum += (hit - (s.left_eye + s.right_eye) * 0.5).norm();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoFixation);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmdConfig {
    /// Pixels per eye.
    pub per_eye_width: u32,
    pub per_eye_height: u32,
    /// Horizontal field of view per eye in degrees.
    pub horizontal_fov: f64,
}

impl Default for HmdConfig {
    /// 2880×1600 combined panel, 98° per eye.
    fn default() -> Self {
        HmdConfig {
            per_eye_width: 1440,
            per_eye_height: 1600,
            horizontal_fov: 98.0,
        }
    }
}

impl HmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_eye_width == 0 || self.per_eye_height == 0 {
            return Err(Error::invalid("HMD resolution must be positive"));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < 180.0) {
            return Err(Error::invalid("HMD field of view must be in (0, 180) degrees"));
        }
        Ok(())
    }
}

/// Width in pixels covered by an object of `extent` seen from `distance`,
/// assuming pixels spread evenly over the field of view.
pub fn pixel_footprint(extent: f64, distance: f64, hmd: &HmdConfig) -> Result<f64> {
    hmd.validate()?;
    if !(extent > 0.0 && distance > 0.0 && extent.is_finite() && distance.is_finite()) {
        return Err(Error::invalid("extent and distance must be positive"));
    }
    let angle = 2.0 * (extent / (2.0 * distance)).atan();
    Ok(f64::from(hmd.per_eye_width) * angle / hmd.horizontal_fov.to_radians())
}

/// Square footprint as a share of the screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenShare {
    pub pixels: f64,
    /// Fraction of one eye's panel.
    pub per_eye: f64,
    /// Fraction of the combined two-eye framebuffer.
    pub combined: f64,
}

pub fn screen_share(extent: f64, distance: f64, hmd: &HmdConfig) -> Result<ScreenShare> {
    let pixels = pixel_footprint(extent, distance, hmd)?;
    let eye = f64::from(hmd.per_eye_width) * f64::from(hmd.per_eye_height);
    Ok(ScreenShare {
        pixels,
        per_eye: pixels * pixels / eye,
        combined: pixels * pixels / (2.0 * eye),
    })
}

fn parse_floats(fields: &[&str], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("bad number '{f}'")))
        })
        .collect()
}

fn vec3(v: &[f64]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Reads gaze logs in the plain-text format:
///
/// ```text
/// # comment
/// trial <id>
/// tooth <x> <y> <z>
/// <t> <lx> <ly> <lz> <rx> <ry> <rz> <dx> <dy> <dz> [<hx> <hy> <hz>]
/// ```
///
/// A file may hold several trials; each `trial` line starts a new one.
/// Sample lines carry 10 fields, or 13 when the hit point was logged.
pub fn read_gaze_logs(r: impl BufRead) -> Result<Vec<TrialGazeLog>> {
    let mut logs: Vec<TrialGazeLog> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
        match fields[0] {
            "trial" => {
                if fields.len() != 2 {
                    return Err(Error::parse(n, "expected 'trial <id>'"));
                }
                logs.push(TrialGazeLog {
                    trial_id: fields[1].to_string(),
                    tooth_center: Vector3::zeros(),
                    samples: Vec::new(),
                });
            }
            "tooth" => {
                let log = logs.last_mut().ok_or_else(|| Error::parse(n, "'tooth' before any 'trial'"))?;
                if fields.len() != 4 {
                    return Err(Error::parse(n, "expected 'tooth <x> <y> <z>'"));
                }
                log.tooth_center = vec3(&parse_floats(&fields[1..], n)?);
            }
            _ => {
                let log = logs.last_mut().ok_or_else(|| Error::parse(n, "sample before any 'trial'"))?;
                if fields.len() != 10 && fields.len() != 13 {
                    return Err(Error::parse(n, format!("expected 10 or 13 fields, found {}", fields.len())));
                }
                let v = parse_floats(&fields, n)?;
                let sample = GazeSample {
                    timestamp: v[0],
                    left_eye: vec3(&v[1..4]),
                    right_eye: vec3(&v[4..7]),
                    direction: vec3(&v[7..10]),
                    hit: (v.len() == 13).then(|| vec3(&v[10..13])),
                };
                cyclops_ray(&sample).map_err(|e| Error::parse(n, e.to_string()))?;
                if log.samples.last().is_some_and(|p| p.timestamp > sample.timestamp) {
                    return Err(Error::parse(n, "timestamps must not decrease"));
                }
                log.samples.push(sample);
            }
        }
    }
    Ok(logs)
}

pub fn write_gaze_logs(logs: &[TrialGazeLog], mut w: impl Write) -> Result<()> {
    let v = |p: &Vector3<f64>| format!("{} {} {}", p.x, p.y, p.z);
    for log in logs {
        writeln!(w, "trial {}", log.trial_id)?;
        writeln!(w, "tooth {}", v(&log.tooth_center))?;
        for s in &log.samples {
            write!(w, "{} {} {} {}", s.timestamp, v(&s.left_eye), v(&s.right_eye), v(&s.direction))?;
            if let Some(h) = s.hit {
                write!(w, " {}", v(&h))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialGazeStats {
    pub trial_id: String,
    pub hit_count: usize,
    /// `None` when the trial has no hits.
    pub mean_distance: Option<f64>,
}

pub fn trial_stats(log: &TrialGazeLog) -> TrialGazeStats {
    TrialGazeStats {
        trial_id: log.trial_id.clone(),
        hit_count: log.hit_count(),
        mean_distance: mean_eye_tooth_distance(log).ok(),
    }
}

/// Writes `trialId,hitCount,meanDistance`; trials without hits leave the
/// distance empty.
pub fn write_trial_csv(stats: &[TrialGazeStats], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trialId", "hitCount", "meanDistance"])?;
    for s in stats {
        out.write_record([
            s.trial_id.clone(),
            s.hit_count.to_string(),
            s.mean_distance.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Seeded gaze log of a user viewing `mesh` from roughly `distance` cm.
///
/// The head drifts around a viewpoint above the tooth, the eyes sit 6.4 cm
/// apart, and gaze aims at points scattered around the tooth centre, so some
/// samples miss. Hits are found by casting each cyclops ray at `mesh`.
pub fn synthetic_gaze_log(
    mesh: &TriangleMesh,
    trial_id: &str,
    samples: usize,
    distance: f64,
    seed: u64,
) -> TrialGazeLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = mesh.vertices.iter().fold(
        (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), v| (lo.inf(v), hi.sup(v)),
    );
    let center = (lo + hi) * 0.5;
    let reach = (hi - lo).amax().max(1e-9);
    let mut out = TrialGazeLog {
        trial_id: trial_id.to_string(),
        tooth_center: center,
        samples: Vec::with_capacity(samples),
    };
    let mut jitter = |s: f64| Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
    for i in 0..samples {
        let view = Vector3::new(0.3, 1.0, 0.4).normalize() + jitter(0.15);
        let eye = center + view.normalize() * distance * (1.0 + jitter(0.1).x);
        let across = view.cross(&Vector3::y()).try_normalize(1e-9).unwrap_or(Vector3::x());
        let target = center + jitter(0.6 * reach);
        let direction = (target - eye).normalize();
        let mut sample = GazeSample {
            timestamp: i as f64 * 0.1,
            left_eye: eye - across * 3.2,
            right_eye: eye + across * 3.2,
            direction,
            hit: None,
        };
        let ray = Ray { origin: eye, direction };
        sample.hit = tooth_hit(&ray, mesh).map(|h| h.point);
        out.samples.push(sample);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(left: [f64; 3], right: [f64; 3], dir: [f64; 3], hit: Option<[f64; 3]>) -> GazeSample {
        GazeSample {
            timestamp: 0.0,
            left_eye: Vector3::from(left),
            right_eye: Vector3::from(right),
            direction: Vector3::from(dir),
            hit: hit.map(Vector3::from),
        }
    }

    #[test]
    fn cyclops_origin_is_eye_midpoint() {
        let r = cyclops_ray(&sample([-3.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 0.0, 1.0], None)).unwrap();
        assert_eq!(r.origin, Vector3::zeros());
        let r = cyclops_ray(&sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 0.0, 0.0], None)).unwrap();
        assert_eq!(r.origin, Vector3::new(1.0, 2.0, 3.0));
        assert!(cyclops_ray(&sample([0.0; 3], [0.0; 3], [0.0, 0.0, 2.0], None)).is_err());
    }

    #[test]
    fn nearest_triangle_wins() {
        let mut mesh = TriangleMesh::default();
        for z in [5.0, 2.0] {
            let base = mesh.vertices.len() as u32;
            mesh.vertices.extend([
                Vector3::new(-1.0, -1.0, z),
                Vector3::new(1.0, -1.0, z),
                Vector3::new(0.0, 1.0, z),
            ]);
            mesh.triangles.push([base, base + 1, base + 2]);
        }
        let ray = Ray {
            origin: Vector3::zeros(),
            direction: Vector3::z(),
        };
        let hit = tooth_hit(&ray, &mesh).unwrap();
        assert_relative_eq!(hit.distance, 2.0);
        let away = Ray {
            direction: -Vector3::z(),
            ..ray
        };
        assert!(tooth_hit(&away, &mesh).is_none());
        let beside = Ray {
            origin: Vector3::new(3.0, 0.0, 0.0),
            ..ray
        };
        assert!(tooth_hit(&beside, &mesh).is_none());
    }

    #[test]
    fn mean_distance_over_hits() {
        let at = |d: f64| sample([-3.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 0.0, 1.0], Some([0.0, 0.0, d]));
        let mut log = TrialGazeLog {
            trial_id: "t".into(),
            tooth_center: Vector3::new(0.0, 0.0, 25.0),
            samples: vec![at(20.0), sample([0.0; 3], [0.0; 3], [0.0, 0.0, 1.0], None), at(30.0)],
        };
        assert_relative_eq!(mean_eye_tooth_distance(&log).unwrap(), 25.0);
        log.samples.retain(|s| s.hit.is_none());
        assert!(matches!(mean_eye_tooth_distance(&log), Err(Error::NoFixation)));
    }

    #[test]
    fn footprint_anchors() {
        let hmd = HmdConfig::default();
        let full = 2.0 * 10.0 * 49f64.to_radians().tan();
        assert_relative_eq!(pixel_footprint(full, 10.0, &hmd).unwrap(), 1440.0, max_relative = 1e-12);
        let px = pixel_footprint(3.26, 23.0, &hmd).unwrap();
        assert!((px - 119.0).abs() < 0.15 * 119.0, "{px}");
        let share = screen_share(3.26, 23.0, &hmd).unwrap();
        assert_relative_eq!(share.per_eye, 2.0 * share.combined, max_relative = 1e-12);
        assert!(pixel_footprint(3.26, 11.5, &hmd).unwrap() > px);
        assert!(pixel_footprint(0.0, 23.0, &hmd).is_err());
    }

    #[test]
    fn log_text_round_trip() {
        let text = "# session 1\ntrial A\ntooth 0 0 25\n0 -3 0 0 3 0 0 0 0 1 0 0 24\n0.5 -3 0 0 3 0 0 0 0 1\ntrial B\ntooth 1 1 1\n";
        let logs = read_gaze_logs(text.as_bytes()).unwrap();
        assert_eq!(logs.len(), 2);
        assert_eq!(logs[0].hit_count(), 1);
        let mut buf = Vec::new();
        write_gaze_logs(&logs, &mut buf).unwrap();
        assert_eq!(read_gaze_logs(buf.as_slice()).unwrap(), logs);

        let err = read_gaze_logs("trial A\n0 1 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(read_gaze_logs("trial A\n1 0 0 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 0 0 1\n".as_bytes()).is_err());
    }
}
