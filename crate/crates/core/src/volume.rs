//! Tissue-labelled sphere packs: the drillable tooth.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dental tissue carried by each sphere and each occupied voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tissue {
    Enamel,
    Dentin,
    Pulp,
}

impl Tissue {
    pub const ALL: [Tissue; 3] = [Tissue::Enamel, Tissue::Dentin, Tissue::Pulp];

    /// Non-zero code used in voxel label buffers (0 means empty).
    pub fn code(self) -> u8 {
        match self {
            Tissue::Enamel => 1,
            Tissue::Dentin => 2,
            Tissue::Pulp => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Tissue> {
        match code {
            1 => Some(Tissue::Enamel),
            2 => Some(Tissue::Dentin),
            3 => Some(Tissue::Pulp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Enamel => "enamel",
            Tissue::Dentin => "dentin",
            Tissue::Pulp => "pulp",
        }
    }
}

impl fmt::Display for Tissue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tissue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enamel" => Ok(Tissue::Enamel),
            "dentin" => Ok(Tissue::Dentin),
            "pulp" => Ok(Tissue::Pulp),
            other => Err(Error::invalid(format!("unknown tissue '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    /// Centre in millimetres.
    pub center: Vector3<f64>,
    /// Radius in millimetres, strictly positive.
    pub radius: f64,
    pub tissue: Tissue,
    pub removed: bool,
}

impl Sphere {
    pub fn new(center: Vector3<f64>, radius: f64, tissue: Tissue) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "sphere radius must be > 0, got {radius}"
            )));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("sphere centre must be finite"));
        }
        Ok(Sphere {
            center,
            radius,
            tissue,
            removed: false,
        })
    }
}

/// Axis-aligned box in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow_point(&mut self, p: &Vector3<f64>, pad: f64) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a] - pad);
            self.max[a] = self.max[a].max(p[a] + pad);
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    /// Inflates the box by `pad` (per axis) on every side.
    pub fn padded(&self, pad: &Vector3<f64>) -> Aabb {
        Aabb {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    pub fn contains_point(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, other: &Aabb, tol: f64) -> bool {
        (0..3).all(|a| other.min[a] >= self.min[a] - tol && other.max[a] <= self.max[a] + tol)
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|a| {
            !self.min[a].is_finite() || !self.max[a].is_finite() || self.max[a] <= self.min[a]
        })
    }
}

/// Per-tissue sphere counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TissueCounts {
    pub enamel: usize,
    pub dentin: usize,
    pub pulp: usize,
}

impl TissueCounts {
    pub fn get(&self, t: Tissue) -> usize {
        match t {
            Tissue::Enamel => self.enamel,
            Tissue::Dentin => self.dentin,
            Tissue::Pulp => self.pulp,
        }
    }

    fn bump(&mut self, t: Tissue) {
        match t {
            Tissue::Enamel => self.enamel += 1,
            Tissue::Dentin => self.dentin += 1,
            Tissue::Pulp => self.pulp += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.enamel + self.dentin + self.pulp
    }
}

/// Uniform grid over sphere centres, used for bur and point queries.
///
/// Sphere positions never change after loading (drilling only flips the
/// `removed` flag) so the index is built once.
#[derive(Debug, Clone)]
pub(crate) struct SphereGrid {
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl SphereGrid {
    fn build(spheres: &[Sphere], cell: f64) -> Self {
        let mut bounds = Aabb::empty();
        for s in spheres {
            bounds.grow_point(&s.center, 0.0);
        }
        let mut dims = [1usize; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            *d = ((bounds.extent()[a] / cell).floor() as usize + 1).max(1);
        }
        let mut grid = SphereGrid {
            origin: bounds.min,
            cell,
            dims,
            starts: vec![0; dims[0] * dims[1] * dims[2] + 1],
            entries: vec![0; spheres.len()],
        };
        let cells: Vec<usize> = spheres
            .iter()
            .map(|s| grid.flat(grid.cell_of(&s.center)))
            .collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for i in 1..grid.starts.len() {
            grid.starts[i] += grid.starts[i - 1];
        }
        let mut fill = grid.starts.clone();
        for (idx, &c) in cells.iter().enumerate() {
            grid.entries[fill[c] as usize] = idx as u32;
            fill[c] += 1;
        }
        grid
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [usize; 3] {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.cell).floor();
            c[a] = (f.max(0.0) as usize).min(self.dims[a] - 1);
        }
        c
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Calls `f` with every sphere index whose centre may lie within `radius`
    /// of `p`. Candidates are a superset; callers apply the exact test.
    pub(crate) fn for_each_candidate(
        &self,
        p: &Vector3<f64>,
        radius: f64,
        mut f: impl FnMut(usize),
    ) {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let l = ((p[a] - radius - self.origin[a]) / self.cell).floor();
            let h = ((p[a] + radius - self.origin[a]) / self.cell).floor();
            if !(h >= 0.0 && l <= (self.dims[a] - 1) as f64) {
                return;
            }
            lo[a] = l.max(0.0) as usize;
            hi[a] = (h as usize).min(self.dims[a] - 1);
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let c = self.flat([x, y, z]);
                    let range = self.starts[c] as usize..self.starts[c + 1] as usize;
                    for &e in &self.entries[range] {
                        f(e as usize);
                    }
                }
            }
        }
    }
}

/// The drillable tooth: an ordered set of tissue-labelled spheres.
#[derive(Debug, Clone)]
pub struct SpherePackVolume {
    spheres: Vec<Sphere>,
    bounds: Aabb,
    pub(crate) index: SphereGrid,
}

impl SpherePackVolume {
    /// Builds a volume; the bounding box is the tight box around all sphere
    /// extents (centre ± radius).
    pub fn new(spheres: Vec<Sphere>) -> Result<Self> {
        if spheres.is_empty() {
            return Err(Error::EmptyVolume);
        }
        let mut bounds = Aabb::empty();
        let mut max_r: f64 = 0.0;
        for s in &spheres {
            if !(s.radius > 0.0 && s.radius.is_finite()) {
                return Err(Error::invalid(format!(
                    "sphere radius must be > 0, got {}",
                    s.radius
                )));
            }
            bounds.grow_point(&s.center, s.radius);
            max_r = max_r.max(s.radius);
        }
        // Cell size matches the largest default metaball support (2 radii).
        let index = SphereGrid::build(&spheres, 2.0 * max_r);
        Ok(SpherePackVolume {
            spheres,
            bounds,
            index,
        })
    }

    pub fn spheres(&self) -> &[Sphere] {
        &self.spheres
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    pub fn bounding_box(&self) -> Aabb {
        self.bounds
    }

    pub fn max_radius(&self) -> f64 {
        self.spheres.iter().map(|s| s.radius).fold(0.0, f64::max)
    }

    /// Counts of all spheres per tissue, removed or not.
    pub fn tissue_counts(&self) -> TissueCounts {
        let mut c = TissueCounts::default();
        for s in &self.spheres {
            c.bump(s.tissue);
        }
        c
    }

    pub fn live_count(&self) -> usize {
        self.spheres.iter().filter(|s| !s.removed).count()
    }

    pub fn removed_count(&self) -> usize {
        self.spheres.len() - self.live_count()
    }

    /// Indices of removed spheres, ascending.
    pub fn removed_indices(&self) -> Vec<usize> {
        self.spheres
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.removed.then_some(i))
            .collect()
    }

    pub(crate) fn spheres_mut(&mut self) -> &mut [Sphere] {
        &mut self.spheres
    }

    /// Marks every sphere as present again.
    pub fn restore_all(&mut self) {
        for s in &mut self.spheres {
            s.removed = false;
        }
    }

    pub fn read_json(reader: impl Read) -> Result<Self> {
        let file: SpherePackFile = serde_json::from_reader(reader)?;
        file.into_volume()
    }

    pub fn write_json(&self, writer: impl Write) -> Result<()> {
        serde_json::to_writer(writer, &SpherePackFile::from_volume(self))?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpherePackHeader {
    counts: TissueCounts,
    bounding_box: Aabb,
}

#[derive(Debug, Serialize, Deserialize)]
struct SphereRecord {
    center: [f64; 3],
    radius: f64,
    tissue: Tissue,
}

/// On-disk sphere pack: header with per-tissue counts and bounding box, then a
/// flat sphere array.
#[derive(Debug, Serialize, Deserialize)]
struct SpherePackFile {
    header: SpherePackHeader,
    spheres: Vec<SphereRecord>,
}

impl SpherePackFile {
    fn from_volume(v: &SpherePackVolume) -> Self {
        SpherePackFile {
            header: SpherePackHeader {
                counts: v.tissue_counts(),
                bounding_box: v.bounding_box(),
            },
            spheres: v
                .spheres
                .iter()
                .map(|s| SphereRecord {
                    center: [s.center.x, s.center.y, s.center.z],
                    radius: s.radius,
                    tissue: s.tissue,
                })
                .collect(),
        }
    }

    fn into_volume(self) -> Result<SpherePackVolume> {
        let spheres = self
            .spheres
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Sphere::new(Vector3::from(r.center), r.radius, r.tissue)
                    .map_err(|e| Error::invalid(format!("sphere #{i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let volume = SpherePackVolume::new(spheres)?;
        let counts = volume.tissue_counts();
        if counts != self.header.counts {
            return Err(Error::invalid(format!(
                "header counts {:?} do not match sphere array {:?}",
                self.header.counts, counts
            )));
        }
        let declared = self.header.bounding_box;
        let tol = 1e-9 * (1.0 + declared.extent().amax());
        if !declared.contains_box(&volume.bounding_box(), tol) {
            return Err(Error::invalid(
                "header bounding box does not contain all sphere extents",
            ));
        }
        Ok(volume)
    }
}
