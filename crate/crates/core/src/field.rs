//! Metaball scalar field over a sphere pack and its sampling on a regular grid.
//!
//! Each live sphere contributes a compact-support polynomial falloff
//! `k(q) = 1 - 3q² + 2q³` for `q = d / R < 1`, with support `R` equal to
//! `support_scale × radius` (2 radii by default). The iso-level defaults to 0.5,
//! which puts the surface of an isolated sphere exactly at its radius.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{for_each_chunk_mut, Execution};
use crate::volume::{Aabb, SpherePackVolume, Tissue};

/// Reference grid resolution (x, y, z) with y the tooth's long axis.
pub const REFERENCE_DIMS: [usize; 3] = [90, 135, 90];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaballKernel {
    /// Kernel support as a multiple of the sphere radius.
    pub support_scale: f64,
    /// Field threshold separating material from empty space.
    pub iso_level: f64,
}

impl Default for MetaballKernel {
    fn default() -> Self {
        MetaballKernel {
            support_scale: 2.0,
            iso_level: 0.5,
        }
    }
}

impl MetaballKernel {
    pub fn new(support_scale: f64, iso_level: f64) -> Result<Self> {
        if !(support_scale > 0.0 && support_scale.is_finite()) {
            return Err(Error::invalid("kernel support scale must be > 0"));
        }
        if !(iso_level > 0.0 && iso_level < 1.0) {
            return Err(Error::invalid("iso level must lie in (0, 1)"));
        }
        Ok(MetaballKernel {
            support_scale,
            iso_level,
        })
    }

    pub fn support(&self, radius: f64) -> f64 {
        self.support_scale * radius
    }

    /// `1 / R²` for a sphere of the given radius.
    #[inline]
    pub fn inv_support_sq(&self, radius: f64) -> f64 {
        let r = self.support(radius);
        1.0 / (r * r)
    }

    /// Falloff as a function of `t = d² / R²`; zero for `t >= 1`.
    #[inline]
    pub fn falloff(t: f64) -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let q = t.sqrt();
        1.0 - t * (3.0 - 2.0 * q)
    }

    /// Kernel maximum, attained at the sphere centre.
    pub fn peak(&self) -> f64 {
        1.0
    }

    /// Contribution of a sphere of `radius` at squared distance `dist_sq`.
    #[inline]
    pub fn contribution(&self, dist_sq: f64, radius: f64) -> f64 {
        Self::falloff(dist_sq * self.inv_support_sq(radius))
    }
}

/// Metaball field induced by the live spheres of a volume.
#[derive(Debug, Clone, Copy)]
pub struct MetaballField<'a> {
    volume: &'a SpherePackVolume,
    kernel: MetaballKernel,
}

/// Builds the metaball field of a volume with the default kernel.
pub fn build_field(volume: &SpherePackVolume) -> Result<MetaballField<'_>> {
    build_field_with(volume, MetaballKernel::default())
}

pub fn build_field_with(
    volume: &SpherePackVolume,
    kernel: MetaballKernel,
) -> Result<MetaballField<'_>> {
    if volume.is_empty() {
        return Err(Error::EmptyVolume);
    }
    Ok(MetaballField { volume, kernel })
}

impl<'a> MetaballField<'a> {
    pub fn kernel(&self) -> MetaballKernel {
        self.kernel
    }

    pub fn iso_level(&self) -> f64 {
        self.kernel.iso_level
    }

    pub fn volume(&self) -> &'a SpherePackVolume {
        self.volume
    }

    /// Field value at `p`; contributions are summed in sphere order.
    pub fn evaluate(&self, p: &Vector3<f64>) -> f64 {
        self.evaluate_labeled(p).0
    }

    /// Field value at `p` together with the tissue of the largest contributor.
    pub fn evaluate_labeled(&self, p: &Vector3<f64>) -> (f64, Option<Tissue>) {
        let spheres = self.volume.spheres();
        let reach = self.kernel.support(self.volume.max_radius());
        let mut candidates = Vec::new();
        self.volume
            .index
            .for_each_candidate(p, reach, |i| candidates.push(i));
        candidates.sort_unstable();
        let mut sum = 0.0;
        let mut best = 0.0;
        let mut label = None;
        for i in candidates {
            let s = &spheres[i];
            if s.removed {
                continue;
            }
            let dx = p.x - s.center.x;
            let dy = p.y - s.center.y;
            let dz = p.z - s.center.z;
            let c = self
                .kernel
                .contribution(dx * dx + (dy * dy + dz * dz), s.radius);
            sum += c;
            if c > best {
                best = c;
                label = Some(s.tissue);
            }
        }
        (sum, label)
    }
}

/// Placement of a regular grid of voxels in millimetres.
///
/// Voxel `(i, j, k)` spans `origin + [i, i+1) × cell` and is sampled at its
/// centre. Storage order is x fastest, then y, then z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub origin: Vector3<f64>,
    pub cell: Vector3<f64>,
}

impl GridSpec {
    /// Splits `bounds` into `dims` voxels.
    pub fn new(dims: [usize; 3], bounds: &Aabb) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidDims(dims));
        }
        if bounds.is_degenerate() {
            return Err(Error::DegenerateBox(format!(
                "min {:?} max {:?}",
                bounds.min.as_slice(),
                bounds.max.as_slice()
            )));
        }
        let ext = bounds.extent();
        let cell = Vector3::new(
            ext.x / dims[0] as f64,
            ext.y / dims[1] as f64,
            ext.z / dims[2] as f64,
        );
        Ok(GridSpec {
            dims,
            origin: bounds.min,
            cell,
        })
    }

    /// Tight box around every sphere's kernel support plus a one-cell margin
    /// on each side, so the iso-surface never touches the boundary samples.
    pub fn fitted(
        volume: &SpherePackVolume,
        kernel: &MetaballKernel,
        dims: [usize; 3],
    ) -> Result<Self> {
        if dims.iter().any(|&d| d < 3) {
            return Err(Error::InvalidDims(dims));
        }
        let mut tight = Aabb::empty();
        for s in volume.spheres() {
            tight.grow_point(&s.center, kernel.support(s.radius));
        }
        if tight.is_degenerate() {
            return Err(Error::DegenerateBox("volume has no extent".into()));
        }
        let ext = tight.extent();
        let cell = Vector3::new(
            ext.x / (dims[0] - 2) as f64,
            ext.y / (dims[1] - 2) as f64,
            ext.z / (dims[2] - 2) as f64,
        );
        Ok(GridSpec {
            dims,
            origin: tight.min - cell,
            cell,
        })
    }

    pub fn bounds(&self) -> Aabb {
        let ext = Vector3::new(
            self.cell.x * self.dims[0] as f64,
            self.cell.y * self.dims[1] as f64,
            self.cell.z * self.dims[2] as f64,
        );
        Aabb::new(self.origin, self.origin + ext)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    /// Centre coordinate of voxel `i` along `axis`.
    #[inline]
    pub fn center_coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + (i as f64 + 0.5) * self.cell[axis]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.center_coord(0, i),
            self.center_coord(1, j),
            self.center_coord(2, k),
        )
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell.x * self.cell.y * self.cell.z
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell.norm()
    }

    /// True when both grids describe the same voxels.
    pub fn compatible(&self, other: &GridSpec) -> bool {
        let tol = 1e-9 * (1.0 + self.cell.amax());
        self.dims == other.dims
            && (self.origin - other.origin).amax() <= tol
            && (self.cell - other.cell).amax() <= tol
    }

    /// Index ranges of voxel centres along one axis, for the splat loops.
    fn axis_spans(&self, axis: usize) -> AxisSpans {
        AxisSpans {
            origin: self.origin[axis],
            inv_cell: 1.0 / self.cell[axis],
            last: self.dims[axis] as i64 - 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct AxisSpans {
    origin: f64,
    inv_cell: f64,
    last: i64,
}

impl AxisSpans {
    /// Voxel indices whose centres lie within `[lo, hi]`, clamped to the grid.
    /// The bounds are widened by a hair so rounding never drops a voxel;
    /// callers still test the exact distance.
    #[inline]
    fn span(&self, lo: f64, hi: f64) -> Option<(usize, usize)> {
        const SLACK: f64 = 1e-7;
        let a = ceil_i64((lo - self.origin) * self.inv_cell - 0.5 - SLACK).max(0);
        let b = floor_i64((hi - self.origin) * self.inv_cell - 0.5 + SLACK).min(self.last);
        (a <= b).then_some((a as usize, b as usize))
    }
}

// Saturating casts keep these exact for the finite, grid-sized inputs used
// here without going through libm.
#[inline]
fn floor_i64(x: f64) -> i64 {
    let i = x as i64;
    if (i as f64) > x {
        i - 1
    } else {
        i
    }
}

#[inline]
fn ceil_i64(x: f64) -> i64 {
    let i = x as i64;
    if (i as f64) < x {
        i + 1
    } else {
        i
    }
}

/// Field values and dominant tissue sampled at every voxel centre.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: GridSpec,
    iso_level: f64,
    values: Vec<f64>,
    /// Tissue code of the largest contributor (0 where nothing contributes).
    dominant: Vec<u8>,
}

impl SampledField {
    pub fn from_values(grid: GridSpec, iso_level: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} voxels",
                values.len(),
                grid.len()
            )));
        }
        let dominant = vec![Tissue::Dentin.code(); values.len()];
        Ok(SampledField {
            grid,
            iso_level,
            values,
            dominant,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn iso_level(&self) -> f64 {
        self.iso_level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dominant_codes(&self) -> &[u8] {
        &self.dominant
    }

    pub fn is_inside(&self, idx: usize) -> bool {
        self.values[idx] >= self.iso_level
    }
}

/// Samples the field at every voxel centre of `grid`.
///
/// Spheres are splatted into the z-planes their support reaches. Each plane is
/// an independent task, and within a plane contributions are accumulated in
/// ascending sphere order, so the result is bitwise identical to a per-voxel
/// sum over all spheres regardless of the execution policy.
pub fn sample_field(field: &MetaballField<'_>, grid: &GridSpec, exec: Execution) -> SampledField {
    let kernel = field.kernel();
    let [nx, ny, nz] = grid.dims;
    let [sx, sy, sz] = [0, 1, 2].map(|a| grid.axis_spans(a));

    let splats: Vec<Splat> = field
        .volume()
        .spheres()
        .iter()
        .filter(|s| !s.removed)
        .map(|s| {
            let r = kernel.support(s.radius);
            Splat {
                center: [s.center.x, s.center.y, s.center.z],
                support_sq: r * r,
                inv_support_sq: kernel.inv_support_sq(s.radius),
                code: s.tissue.code(),
            }
        })
        .collect();

    // Bucket splats per z-plane with a counting sort; sphere order is
    // preserved inside each bucket.
    let mut ranges: Vec<(u32, u32)> = Vec::with_capacity(splats.len());
    let mut counts = vec![0u32; nz + 1];
    for s in &splats {
        let r = s.support_sq.sqrt();
        match sz.span(s.center[2] - r, s.center[2] + r) {
            Some((lo, hi)) => {
                for c in &mut counts[lo..=hi] {
                    *c += 1;
                }
                ranges.push((lo as u32, hi as u32 + 1));
            }
            None => ranges.push((0, 0)),
        }
    }
    let mut starts = vec![0u32; nz + 1];
    for k in 0..nz {
        starts[k + 1] = starts[k] + counts[k];
    }
    let mut fill = starts.clone();
    let mut buckets = vec![0u32; starts[nz] as usize];
    for (idx, &(lo, hi)) in ranges.iter().enumerate() {
        for k in lo..hi {
            let slot = &mut fill[k as usize];
            buckets[*slot as usize] = idx as u32;
            *slot += 1;
        }
    }

    let plane_len = nx * ny;
    let xs: Vec<f64> = (0..nx).map(|i| grid.center_coord(0, i)).collect();
    let ys: Vec<f64> = (0..ny).map(|j| grid.center_coord(1, j)).collect();

    let mut values = vec![0.0f64; grid.len()];
    let mut dominant = vec![0u8; grid.len()];
    let mut planes: Vec<(&mut [f64], &mut [u8])> = values
        .chunks_mut(plane_len)
        .zip(dominant.chunks_mut(plane_len))
        .collect();
    for_each_chunk_mut(exec, &mut planes, 1, |k, chunk| {
        let (values, dominant) = &mut chunk[0];
        let mut best = vec![0.0f64; plane_len];
        let z = grid.center_coord(2, k);
        for &si in &buckets[starts[k] as usize..starts[k + 1] as usize] {
            let s = &splats[si as usize];
            let [cx, cy, cz] = s.center;
            let dz = z - cz;
            let dz2 = dz * dz;
            let rem = s.support_sq - dz2;
            if rem <= 0.0 {
                continue;
            }
            let reach = rem.sqrt();
            let Some((j0, j1)) = sy.span(cy - reach, cy + reach) else {
                continue;
            };
            let Some((i0, i1)) = sx.span(cx - reach, cx + reach) else {
                continue;
            };
            let xs = &xs[i0..=i1];
            for (j, &y) in ys.iter().enumerate().take(j1 + 1).skip(j0) {
                let dy = y - cy;
                let dyz2 = dy * dy + dz2;
                let cells = j * nx + i0..j * nx + i0 + xs.len();
                let values = &mut values[cells.clone()];
                let best = &mut best[cells.clone()];
                let dominant = &mut dominant[cells];
                for n in 0..xs.len() {
                    let dx = xs[n] - cx;
                    let t = (dx * dx + dyz2) * s.inv_support_sq;
                    if t < 1.0 {
                        let c = MetaballKernel::falloff(t);
                        values[n] += c;
                        if c > best[n] {
                            best[n] = c;
                            dominant[n] = s.code;
                        }
                    }
                }
            }
        }
    });
    drop(planes);

    SampledField {
        grid: *grid,
        iso_level: kernel.iso_level,
        values,
        dominant,
    }
}

/// Per-sphere data needed by the splat loop.
#[derive(Debug, Clone, Copy)]
struct Splat {
    center: [f64; 3],
    support_sq: f64,
    inv_support_sq: f64,
    code: u8,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Sphere;

    fn single(r: f64) -> SpherePackVolume {
        SpherePackVolume::new(vec![Sphere::new(Vector3::zeros(), r, Tissue::Enamel).unwrap()])
            .unwrap()
    }

    #[test]
    fn kernel_is_monotone_with_compact_support() {
        let mut prev = MetaballKernel::falloff(0.0);
        assert_eq!(prev, 1.0);
        for i in 1..=200 {
            let t = i as f64 / 200.0;
            let v = MetaballKernel::falloff(t);
            assert!(v <= prev && v >= 0.0);
            prev = v;
        }
        assert_eq!(MetaballKernel::falloff(1.0), 0.0);
        assert_eq!(MetaballKernel::falloff(4.0), 0.0);
        // Isolated sphere surface sits at its radius: q = 1/2 gives 0.5.
        assert_eq!(MetaballKernel::falloff(0.25), 0.5);
    }

    #[test]
    fn single_sphere_centre_and_outside_support() {
        let v = single(1.0);
        let f = build_field(&v).unwrap();
        assert_eq!(f.evaluate(&Vector3::zeros()), MetaballKernel::default().peak());
        assert_eq!(f.evaluate(&Vector3::new(2.0, 0.0, 0.0)), 0.0);
        assert_eq!(f.evaluate(&Vector3::new(0.0, 5.0, 1.0)), 0.0);
    }

    #[test]
    fn overlapping_identical_spheres_double_the_field() {
        let a = Sphere::new(Vector3::zeros(), 1.0, Tissue::Dentin).unwrap();
        let two = SpherePackVolume::new(vec![a.clone(), a]).unwrap();
        let one = single(1.0);
        let p = Vector3::new(0.6, 0.2, -0.1);
        let f2 = build_field(&two).unwrap().evaluate(&p);
        let f1 = build_field(&one).unwrap().evaluate(&p);
        // By hand: d² = 0.41, t = 0.1025, q = 0.32016, k = 1 - 0.1025(3 - 0.64031)
        let q = 0.41f64.sqrt() / 2.0;
        let by_hand = 1.0 - 3.0 * q * q + 2.0 * q * q * q;
        assert!((f1 - by_hand).abs() < 1e-12);
        assert_eq!(f2, 2.0 * f1);
    }

    #[test]
    fn removed_spheres_contribute_nothing() {
        let mut v = single(1.0);
        v.spheres_mut()[0].removed = true;
        let f = build_field(&v).unwrap();
        assert_eq!(f.evaluate(&Vector3::zeros()), 0.0);
    }

    #[test]
    fn grid_validation() {
        let b = Aabb::new(Vector3::zeros(), Vector3::repeat(1.0));
        assert!(matches!(GridSpec::new([1, 4, 4], &b), Err(Error::InvalidDims(_))));
        let flat = Aabb::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 1.0));
        assert!(matches!(GridSpec::new([4, 4, 4], &flat), Err(Error::DegenerateBox(_))));
        let g = GridSpec::new([4, 5, 6], &b).unwrap();
        assert_eq!(g.coords(g.index(3, 4, 5)), [3, 4, 5]);
        assert!((g.center_coord(1, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn fitted_grid_leaves_zero_boundary() {
        let v = single(2.0);
        let k = MetaballKernel::default();
        let g = GridSpec::fitted(&v, &k, [20, 30, 20]).unwrap();
        let s = sample_field(&build_field(&v).unwrap(), &g, Execution::Serial);
        let [nx, ny, nz] = g.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1 {
                        assert_eq!(s.values()[g.index(i, j, k)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn sampled_matches_point_evaluation() {
        let spheres = (0..40)
            .map(|i| {
                let f = i as f64;
                Sphere::new(
                    Vector3::new((f * 1.3).sin(), (f * 0.7).cos(), (f * 0.3).sin()),
                    0.3 + 0.01 * f,
                    Tissue::ALL[i % 3],
                )
                .unwrap()
            })
            .collect();
        let v = SpherePackVolume::new(spheres).unwrap();
        let field = build_field(&v).unwrap();
        let g = GridSpec::fitted(&v, &field.kernel(), [12, 14, 10]).unwrap();
        let s = sample_field(&field, &g, Execution::Serial);
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            let (val, lab) = field.evaluate_labeled(&g.center(i, j, k));
            assert_eq!(s.values()[idx], val);
            assert_eq!(s.dominant_codes()[idx], lab.map_or(0, Tissue::code));
        }
    }
}
