//! Procedural reference data: a lower molar sphere pack, an ideal access
//! cavity, drill scripts and synthetic drilled outcomes.
//!
//! Geometry is in millimetres with +y pointing from the root apices towards
//! the occlusal surface. Everything here is deterministic for a given seed.

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::Pose;
use crate::drill::{DrillScript, DrillStep};
use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::volume::{Aabb, Sphere, SpherePackVolume, Tissue, TissueCounts};
use crate::voxel::VoxelGrid;

/// Lattice points paired with their thinning priority.
type LatticePoints = Vec<(Vector3<f64>, u8)>;

/// Sphere counts of the reference tooth.
pub const REFERENCE_COUNTS: TissueCounts = TissueCounts {
    enamel: 100_000,
    dentin: 170_000,
    pulp: 10_000,
};

/// Sphere radius as a fraction of the lattice spacing. With a support of two
/// radii this keeps the field above 0.5 everywhere inside a tissue lattice.
const RADIUS_PER_SPACING: f64 = 0.6;

/// A superellipsoid crown on two tapered roots, with a pulp chamber and canals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToothShape {
    pub crown_center: Vector3<f64>,
    pub crown_semi_axes: Vector3<f64>,
    /// Inner boundary of the enamel cap.
    pub dentin_core_center: Vector3<f64>,
    pub dentin_core_semi_axes: Vector3<f64>,
    /// Enamel only covers the crown above this height.
    pub cervical_height: f64,
    pub roots: [Cone; 2],
    pub pulp_chamber_center: Vector3<f64>,
    pub pulp_chamber_semi_axes: Vector3<f64>,
    pub canals: [Cone; 2],
}

/// Round cone between two axis points with linearly varying radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    pub top: Vector3<f64>,
    pub bottom: Vector3<f64>,
    pub top_radius: f64,
    pub bottom_radius: f64,
}

impl Cone {
    fn contains(&self, p: &Vector3<f64>) -> bool {
        let axis = self.bottom - self.top;
        let len2 = axis.norm_squared();
        let s = ((p - self.top).dot(&axis) / len2).clamp(0.0, 1.0);
        let r = self.top_radius + (self.bottom_radius - self.top_radius) * s;
        (p - (self.top + axis * s)).norm_squared() <= r * r
    }
}

fn superellipsoid(p: &Vector3<f64>, c: &Vector3<f64>, semi: &Vector3<f64>) -> bool {
    let q = (p - c).component_div(semi);
    q.x.powi(4) + q.y.powi(4) + q.z.powi(4) <= 1.0
}

fn ellipsoid(p: &Vector3<f64>, c: &Vector3<f64>, semi: &Vector3<f64>) -> bool {
    (p - c).component_div(semi).norm_squared() <= 1.0
}

impl ToothShape {
    pub fn reference() -> Self {
        let root = |x0: f64, x1: f64| Cone {
            top: Vector3::new(x0, 9.0, 0.0),
            bottom: Vector3::new(x1, 0.8, 0.0),
            top_radius: 2.0,
            bottom_radius: 0.7,
        };
        let canal = |x0: f64, x1: f64| Cone {
            top: Vector3::new(x0, 9.8, 0.0),
            bottom: Vector3::new(x1, 1.6, 0.0),
            top_radius: 0.35,
            bottom_radius: 0.35,
        };
        ToothShape {
            crown_center: Vector3::new(0.0, 11.5, 0.0),
            crown_semi_axes: Vector3::new(5.0, 3.5, 5.0),
            dentin_core_center: Vector3::new(0.0, 11.2, 0.0),
            dentin_core_semi_axes: Vector3::new(3.6, 2.6, 3.6),
            cervical_height: 8.8,
            roots: [root(-2.4, -2.0), root(2.4, 2.0)],
            pulp_chamber_center: Vector3::new(0.0, 10.2, 0.0),
            pulp_chamber_semi_axes: Vector3::new(2.4, 1.1, 2.4),
            canals: [canal(-2.35, -2.05), canal(2.35, 2.05)],
        }
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::new(
            self.crown_center - self.crown_semi_axes,
            self.crown_center + self.crown_semi_axes,
        );
        for r in &self.roots {
            b.grow_point(&r.top, r.top_radius);
            b.grow_point(&r.bottom, r.bottom_radius);
        }
        b
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        superellipsoid(p, &self.crown_center, &self.crown_semi_axes)
            || self.roots.iter().any(|r| r.contains(p))
    }

    pub fn tissue_at(&self, p: &Vector3<f64>) -> Option<Tissue> {
        if !self.contains(p) {
            return None;
        }
        if ellipsoid(p, &self.pulp_chamber_center, &self.pulp_chamber_semi_axes)
            || self.canals.iter().any(|c| c.contains(p))
        {
            return Some(Tissue::Pulp);
        }
        let in_crown = superellipsoid(p, &self.crown_center, &self.crown_semi_axes);
        let in_core = superellipsoid(p, &self.dentin_core_center, &self.dentin_core_semi_axes);
        if in_crown && !in_core && p.y >= self.cervical_height {
            return Some(Tissue::Enamel);
        }
        Some(Tissue::Dentin)
    }

    /// Occupancy of the analytic shape at voxel centres.
    pub fn voxelize(&self, grid: &GridSpec) -> VoxelGrid {
        let mut out = VoxelGrid::empty(*grid);
        for idx in 0..grid.len() {
            let [i, j, k] = grid.coords(idx);
            out.set(idx, self.tissue_at(&grid.center(i, j, k)));
        }
        out
    }

    /// Lattice points of `tissue` at the given spacing, z-major order.
    ///
    /// Inside the tooth the tissue is dilated by half a spacing so lattices of
    /// neighbouring tissues overlap and leave no seam at the interface. Each
    /// point carries a thinning priority: 0 on the outer surface, 1 on a
    /// tissue interface, 2 in the interior.
    fn lattice(&self, tissue: Tissue, spacing: f64) -> LatticePoints {
        let b = self.bounds();
        let n = b.extent().map(|e| (e / spacing).ceil() as usize + 1);
        let at = |i: usize, j: usize, k: usize| i + n.x * (j + n.y * k);
        let half = 0.5 * spacing;
        let steps = [
            Vector3::new(half, 0.0, 0.0),
            Vector3::new(-half, 0.0, 0.0),
            Vector3::new(0.0, half, 0.0),
            Vector3::new(0.0, -half, 0.0),
            Vector3::new(0.0, 0.0, half),
            Vector3::new(0.0, 0.0, -half),
        ];
        let point = |i: usize, j: usize, k: usize| {
            b.min + Vector3::new(i as f64, j as f64, k as f64) * spacing
        };
        let mut member = vec![false; n.x * n.y * n.z];
        let mut solid = vec![false; n.x * n.y * n.z];
        for k in 0..n.z {
            for j in 0..n.y {
                for i in 0..n.x {
                    let p = point(i, j, k);
                    let here = self.tissue_at(&p);
                    solid[at(i, j, k)] = here.is_some();
                    member[at(i, j, k)] = here == Some(tissue)
                        || (here.is_some()
                            && steps.iter().any(|d| self.tissue_at(&(p + d)) == Some(tissue)));
                }
            }
        }
        let mut pts = Vec::new();
        for k in 0..n.z {
            for j in 0..n.y {
                for i in 0..n.x {
                    if !member[at(i, j, k)] {
                        continue;
                    }
                    let mut priority = 2;
                    for (di, dj, dk) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                        let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        let outside_lattice = ni < 0
                            || nj < 0
                            || nk < 0
                            || ni >= n.x as i64
                            || nj >= n.y as i64
                            || nk >= n.z as i64;
                        if outside_lattice {
                            priority = 0;
                            continue;
                        }
                        let q = at(ni as usize, nj as usize, nk as usize);
                        if !solid[q] {
                            priority = 0;
                        } else if !member[q] {
                            priority = priority.min(1);
                        }
                    }
                    pts.push((point(i, j, k), priority));
                }
            }
        }
        pts
    }

    /// Packs exactly `counts` spheres: each tissue is filled with the
    /// coarsest cubic lattice holding at least the requested count, then
    /// thinned to the exact count by dropping a seeded random subset,
    /// preferring outer-surface points. Dropping an interior point would
    /// leave a void, since its six neighbours alone do not lift the field to
    /// the iso-level.
    pub fn sphere_pack(&self, counts: TissueCounts, seed: u64) -> Result<SpherePackVolume> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spheres = Vec::with_capacity(counts.total());
        for tissue in Tissue::ALL {
            let want = counts.get(tissue);
            if want == 0 {
                continue;
            }
            let (spacing, pts) = self.fit_lattice(tissue, want)?;
            let mut excess = pts.len() - want;
            let mut drop = vec![false; pts.len()];
            for priority in 0..=2 {
                let pool: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].1 == priority).collect();
                let take = excess.min(pool.len());
                for s in sample(&mut rng, pool.len(), take) {
                    drop[pool[s]] = true;
                }
                excess -= take;
            }
            let radius = RADIUS_PER_SPACING * spacing;
            for (&(p, _), _) in pts.iter().zip(&drop).filter(|(_, &d)| !d) {
                spheres.push(Sphere::new(p, radius, tissue)?);
            }
        }
        SpherePackVolume::new(spheres)
    }

    fn fit_lattice(&self, tissue: Tissue, want: usize) -> Result<(f64, LatticePoints)> {
        let b = self.bounds();
        let ext = b.extent();
        let mut spacing = (ext.x * ext.y * ext.z / want as f64).cbrt();
        for _ in 0..60 {
            let pts = self.lattice(tissue, spacing);
            if pts.len() >= want && (pts.len() as f64) <= want as f64 * 1.03 {
                return Ok((spacing, pts));
            }
            if pts.is_empty() {
                spacing *= 0.5;
                continue;
            }
            let ratio = (pts.len() as f64 / want as f64).cbrt();
            // Aim slightly above the target count.
            spacing *= if pts.len() < want { ratio * 0.995 } else { ratio.min(1.0 / 0.999) * 1.002 };
        }
        Err(Error::invalid(format!("could not fit a lattice of {want} {tissue} spheres")))
    }
}

/// The reference tooth: 100k enamel, 170k dentin and 10k pulp spheres.
pub fn reference_tooth() -> SpherePackVolume {
    ToothShape::reference()
        .sphere_pack(REFERENCE_COUNTS, 0x7007)
        .expect("reference tooth parameters are valid")
}

/// A smaller tooth of the same shape for quick tests and demos.
pub fn small_tooth(total: usize, seed: u64) -> Result<SpherePackVolume> {
    let f = total as f64 / REFERENCE_COUNTS.total() as f64;
    let counts = TissueCounts {
        enamel: ((REFERENCE_COUNTS.enamel as f64 * f).round() as usize).max(1),
        dentin: ((REFERENCE_COUNTS.dentin as f64 * f).round() as usize).max(1),
        pulp: ((REFERENCE_COUNTS.pulp as f64 * f).round() as usize).max(1),
    };
    ToothShape::reference().sphere_pack(counts, seed)
}

/// Axis-aligned access-cavity mask: everything inside the box is removed in
/// the ideal outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessCavity {
    pub bounds: Aabb,
}

impl AccessCavity {
    /// Opening from the occlusal surface down into the pulp chamber roof.
    pub fn reference() -> Self {
        AccessCavity {
            bounds: Aabb::new(Vector3::new(-2.2, 10.6, -2.2), Vector3::new(2.2, 16.0, 2.2)),
        }
    }

    /// Pristine grid with every voxel centre inside the cavity cleared.
    pub fn carve(&self, pristine: &VoxelGrid) -> VoxelGrid {
        let g = *pristine.grid();
        let mut out = pristine.clone();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            if self.bounds.contains_point(&g.center(i, j, k)) {
                out.set(idx, None);
            }
        }
        out
    }

    /// Raster drill script that clears the cavity with a bur of `bur_radius`,
    /// layer by layer from the top.
    pub fn raster_script(&self, bur_radius: f64) -> DrillScript {
        let step = bur_radius;
        let lo = self.bounds.min.map(|v| v + bur_radius * 0.5);
        let hi = self.bounds.max.map(|v| v - bur_radius * 0.5);
        let mut steps = Vec::new();
        let mut t = 0.0;
        let mut y = hi.y;
        while y >= lo.y - 1e-9 {
            let mut z = lo.z;
            while z <= hi.z + 1e-9 {
                let mut x = lo.x;
                while x <= hi.x + 1e-9 {
                    steps.push(DrillStep {
                        time: t,
                        tip: Pose::new(Vector3::new(x, y, z), Vector3::new(-90.0, 0.0, 0.0)),
                        bur_radius,
                        active: true,
                    });
                    t += 0.01;
                    x += step;
                }
                z += step;
            }
            y -= step;
        }
        DrillScript { steps }
    }
}

/// Vertical plunge along the tooth axis from above the crown to `depth_y`,
/// preceded by a few idle contacts with the drill switched off.
pub fn plunge_script(depth_y: f64, bur_radius: f64) -> DrillScript {
    let mut steps = Vec::new();
    let mut t = 0.0;
    for i in 0..5 {
        steps.push(DrillStep {
            time: t,
            tip: Pose::new(Vector3::new(0.3 * i as f64, 15.2, 0.0), Vector3::new(-90.0, 0.0, 0.0)),
            bur_radius,
            active: false,
        });
        t += 0.05;
    }
    let mut y = 16.0;
    while y >= depth_y {
        steps.push(DrillStep {
            time: t,
            tip: Pose::new(Vector3::new(0.0, y, 0.0), Vector3::new(-90.0, 0.0, 0.0)),
            bur_radius,
            active: true,
        });
        t += 0.02;
        y -= 0.1;
    }
    DrillScript { steps }
}

/// Grid for grid-level synthetic outcomes: the analytic tooth on a coarser
/// lattice with the reference aspect ratio.
pub fn synthetic_grid(dims: [usize; 3]) -> Result<GridSpec> {
    let b = ToothShape::reference().bounds();
    let pad = b.extent().component_div(&Vector3::new(
        dims[0] as f64 - 2.0,
        dims[1] as f64 - 2.0,
        dims[2] as f64 - 2.0,
    ));
    GridSpec::new(dims, &b.padded(&pad))
}

/// Randomised drilled outcomes around the reference cavity: each face of the
/// access box is perturbed (under- or over-extension) and a few spherical
/// gouges are added. Outcomes never add material.
pub fn synthetic_outcomes(pristine: &VoxelGrid, n: usize, seed: u64) -> Vec<VoxelGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ideal = AccessCavity::reference().bounds;
    let g = *pristine.grid();
    (0..n)
        .map(|_| {
            // Severity spreads outcomes from near-ideal to clearly flawed.
            let severity: f64 = rng.random_range(0.0..1.0);
            let mut jitter = |s: f64| rng.random_range(-1.0..1.0) * s * (0.2 + 2.0 * severity);
            let min = ideal.min + Vector3::new(jitter(1.0), jitter(1.2), jitter(1.0));
            let max = ideal.max + Vector3::new(jitter(1.0), 0.0, jitter(1.0));
            let cavity = Aabb::new(min, max);
            let gouges: Vec<(Vector3<f64>, f64)> = (0..rng.random_range(0..4))
                .map(|_| {
                    let c = Vector3::new(
                        rng.random_range(-3.5..3.5),
                        rng.random_range(9.0..14.0),
                        rng.random_range(-3.5..3.5),
                    );
                    (c, rng.random_range(0.3..0.6 + 1.5 * severity))
                })
                .collect();
            let mut out = pristine.clone();
            for idx in 0..g.len() {
                if !out.is_occupied(idx) {
                    continue;
                }
                let [i, j, k] = g.coords(idx);
                let p = g.center(i, j, k);
                let drilled = cavity.contains_point(&p)
                    || gouges.iter().any(|(c, r)| (p - c).norm_squared() <= r * r);
                if drilled {
                    out.set(idx, None);
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_tissues_are_nested() {
        let s = ToothShape::reference();
        assert_eq!(s.tissue_at(&Vector3::new(0.0, 10.2, 0.0)), Some(Tissue::Pulp));
        assert_eq!(s.tissue_at(&Vector3::new(0.0, 14.8, 0.0)), Some(Tissue::Enamel));
        assert_eq!(s.tissue_at(&Vector3::new(2.3, 5.0, 1.0)), Some(Tissue::Dentin));
        assert_eq!(s.tissue_at(&Vector3::new(0.0, 5.0, 0.0)), None);
        assert_eq!(s.tissue_at(&Vector3::new(0.0, 20.0, 0.0)), None);
    }

    #[test]
    fn small_pack_has_exact_counts() {
        let v = ToothShape::reference()
            .sphere_pack(TissueCounts { enamel: 2000, dentin: 3400, pulp: 200 }, 1)
            .unwrap();
        let c = v.tissue_counts();
        assert_eq!((c.enamel, c.dentin, c.pulp), (2000, 3400, 200));
    }

    #[test]
    fn carve_only_removes() {
        let g = synthetic_grid([30, 45, 30]).unwrap();
        let pristine = ToothShape::reference().voxelize(&g);
        let ideal = AccessCavity::reference().carve(&pristine);
        assert_eq!(ideal.count_not_in(&pristine), 0);
        assert!(ideal.occupied_count() < pristine.occupied_count());
        // The cavity opens into the pulp chamber.
        let pulp_removed = (0..g.len())
            .filter(|&i| pristine.tissue(i) == Some(Tissue::Pulp) && !ideal.is_occupied(i))
            .count();
        assert!(pulp_removed > 0);
    }

    #[test]
    fn synthetic_outcomes_are_subsets() {
        let g = synthetic_grid([20, 30, 20]).unwrap();
        let pristine = ToothShape::reference().voxelize(&g);
        for o in synthetic_outcomes(&pristine, 10, 3) {
            assert_eq!(o.count_not_in(&pristine), 0);
        }
    }

    #[test]
    fn scripts_are_valid() {
        plunge_script(10.8, 0.6).validate().unwrap();
        let s = AccessCavity::reference().raster_script(0.8);
        s.validate().unwrap();
        assert!(!s.steps.is_empty());
    }
}
