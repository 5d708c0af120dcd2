//! Material removal from recorded bur trajectories.
//!
//! A sphere is removed when its centre lies within the bur radius of the bur
//! tip (distance ≤ radius). Bur orientation is carried along for completeness
//! but does not affect cutting.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::Vector3;

use crate::calibration::Pose;
use crate::error::{Error, Result};
use crate::volume::SpherePackVolume;

#[derive(Debug, Clone, PartialEq)]
pub struct DrillStep {
    /// Seconds since the start of the trial.
    pub time: f64,
    /// Bur tip pose; position in millimetres in the tooth frame.
    pub tip: Pose,
    /// Bur radius in millimetres.
    pub bur_radius: f64,
    /// False while the bur touches the tooth with the drill switched off.
    pub active: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrillScript {
    pub steps: Vec<DrillStep>,
}

impl DrillScript {
    pub fn new(steps: Vec<DrillStep>) -> Result<Self> {
        let s = DrillScript { steps };
        s.validate()?;
        Ok(s)
    }

    /// Timestamps strictly increasing, radii positive, poses finite.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.steps.iter().enumerate() {
            if !(s.bur_radius > 0.0 && s.bur_radius.is_finite()) {
                return Err(Error::invalid(format!("step {i}: bur radius must be > 0")));
            }
            if !s.time.is_finite() || !s.tip.is_finite() {
                return Err(Error::invalid(format!("step {i}: non-finite value")));
            }
            if i > 0 && s.time <= self.steps[i - 1].time {
                return Err(Error::invalid(format!(
                    "step {i}: timestamps must be strictly increasing ({} after {})",
                    s.time,
                    self.steps[i - 1].time
                )));
            }
        }
        Ok(())
    }

    /// Appends `other`, which must start after this script ends.
    pub fn concat(&self, other: &DrillScript) -> Result<DrillScript> {
        let mut steps = self.steps.clone();
        steps.extend(other.steps.iter().cloned());
        DrillScript::new(steps)
    }

    /// Parses the line format
    /// `t px py pz ox oy oz bur_radius active` (active is 0/1 or true/false).
    /// Blank lines and `#` comments are skipped.
    pub fn read_text(reader: impl BufRead) -> Result<Self> {
        let mut steps = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = n + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            if fields.len() != 9 {
                return Err(Error::parse(line_no, format!("expected 9 fields, found {}", fields.len())));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .map_err(|_| Error::parse(line_no, format!("bad number '{}'", fields[i])))
            };
            let active = match fields[8] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(Error::parse(line_no, format!("bad active flag '{other}'"))),
            };
            steps.push(DrillStep {
                time: num(0)?,
                tip: Pose::new(
                    Vector3::new(num(1)?, num(2)?, num(3)?),
                    Vector3::new(num(4)?, num(5)?, num(6)?),
                ),
                bur_radius: num(7)?,
                active,
            });
        }
        let script = DrillScript { steps };
        script.validate()?;
        Ok(script)
    }

    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        let mut out = String::from("# t px py pz ox oy oz bur_radius active\n");
        for s in &self.steps {
            let p = &s.tip.position;
            let o = &s.tip.orientation;
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {}",
                s.time,
                p.x,
                p.y,
                p.z,
                o.x,
                o.y,
                o.z,
                s.bur_radius,
                u8::from(s.active)
            );
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// Removes every live sphere whose centre is within `bur_radius` of the bur
/// tip and returns how many were removed.
pub fn apply_drill_step(volume: &mut SpherePackVolume, tip: &Pose, bur_radius: f64) -> usize {
    let p = tip.position;
    let r2 = bur_radius * bur_radius;
    let mut hits = Vec::new();
    let spheres = volume.spheres();
    volume.index.for_each_candidate(&p, bur_radius, |i| {
        let s = &spheres[i];
        if !s.removed && (s.center - p).norm_squared() <= r2 {
            hits.push(i);
        }
    });
    let spheres = volume.spheres_mut();
    for &i in &hits {
        spheres[i].removed = true;
    }
    hits.len()
}

/// Replays a script, drilling on active steps only. Returns the number of
/// spheres removed at each step.
pub fn replay(volume: &mut SpherePackVolume, script: &DrillScript) -> Result<Vec<usize>> {
    script.validate()?;
    Ok(script
        .steps
        .iter()
        .map(|s| {
            if s.active {
                apply_drill_step(volume, &s.tip, s.bur_radius)
            } else {
                0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Sphere, Tissue};

    fn lattice(n: usize, spacing: f64) -> SpherePackVolume {
        let mut spheres = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let c = Vector3::new(i as f64, j as f64, k as f64) * spacing;
                    spheres.push(Sphere::new(c, spacing * 0.6, Tissue::Dentin).unwrap());
                }
            }
        }
        SpherePackVolume::new(spheres).unwrap()
    }

    fn step(t: f64, p: [f64; 3], r: f64, active: bool) -> DrillStep {
        DrillStep {
            time: t,
            tip: Pose::at(Vector3::from(p)),
            bur_radius: r,
            active,
        }
    }

    #[test]
    fn far_bur_removes_nothing() {
        let mut v = lattice(5, 1.0);
        assert_eq!(apply_drill_step(&mut v, &Pose::at(Vector3::repeat(100.0)), 1.0), 0);
    }

    #[test]
    fn centred_bur_removes_isolated_sphere() {
        let mut v = SpherePackVolume::new(vec![
            Sphere::new(Vector3::new(1.0, 1.0, 1.0), 0.5, Tissue::Enamel).unwrap(),
        ])
        .unwrap();
        assert_eq!(apply_drill_step(&mut v, &Pose::at(Vector3::new(1.2, 1.0, 1.0)), 0.3), 1);
        assert!(v.spheres()[0].removed);
    }

    #[test]
    fn drilling_is_idempotent() {
        let mut v = lattice(6, 0.5);
        let tip = Pose::at(Vector3::new(1.3, 1.1, 1.2));
        let first = apply_drill_step(&mut v, &tip, 0.9);
        assert!(first > 0);
        assert_eq!(apply_drill_step(&mut v, &tip, 0.9), 0);
    }

    #[test]
    fn inactive_steps_remove_nothing() {
        let mut v = lattice(4, 1.0);
        let script = DrillScript::new(vec![
            step(0.0, [1.0, 1.0, 1.0], 2.0, false),
            step(0.5, [2.0, 2.0, 2.0], 2.0, false),
        ])
        .unwrap();
        assert_eq!(replay(&mut v, &script).unwrap(), vec![0, 0]);
        assert_eq!(v.removed_count(), 0);
    }

    #[test]
    fn non_monotone_timestamps_are_rejected() {
        let script = DrillScript {
            steps: vec![step(1.0, [0.0; 3], 1.0, true), step(1.0, [0.0; 3], 1.0, true)],
        };
        let mut v = lattice(2, 1.0);
        assert!(replay(&mut v, &script).is_err());
        assert!(DrillScript::new(vec![step(0.0, [0.0; 3], 0.0, true)]).is_err());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let script = DrillScript::new(vec![
            step(0.0, [1.0, 2.0, 3.0], 0.5, true),
            step(0.25, [1.5, 2.0, 3.0], 0.5, false),
        ])
        .unwrap();
        let mut buf = Vec::new();
        script.write_text(&mut buf).unwrap();
        assert_eq!(DrillScript::read_text(buf.as_slice()).unwrap(), script);

        let bad = "# header\n0 0 0 0 0 0 0 1 1\n0.1 0 0 0 0 0 0 oops 1\n";
        let err = DrillScript::read_text(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
