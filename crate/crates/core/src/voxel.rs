//! Occupancy grids with per-voxel tissue labels.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{sample_field, GridSpec, MetaballField, SampledField};
use crate::volume::Tissue;

/// Voxelised tooth. Each cell holds 0 for empty space or the code of the
/// dominant tissue where the field reaches the iso-level.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    grid: GridSpec,
    cells: Vec<u8>,
}

impl VoxelGrid {
    pub fn empty(grid: GridSpec) -> Self {
        VoxelGrid {
            cells: vec![0; grid.len()],
            grid,
        }
    }

    /// Wraps a raw label buffer (0 = empty, 1..=3 = tissue code).
    pub fn from_cells(grid: GridSpec, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} cells for a grid of {} voxels",
                cells.len(),
                grid.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c > 3) {
            return Err(Error::invalid(format!("invalid voxel code {bad}")));
        }
        Ok(VoxelGrid { grid, cells })
    }

    /// Builds a grid from an occupancy predicate; occupied voxels get `tissue`.
    pub fn from_fn(grid: GridSpec, tissue: Tissue, mut occupied: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut out = VoxelGrid::empty(grid);
        for idx in 0..grid.len() {
            let [i, j, k] = grid.coords(idx);
            if occupied(i, j, k) {
                out.cells[idx] = tissue.code();
            }
        }
        out
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn is_occupied(&self, idx: usize) -> bool {
        self.cells[idx] != 0
    }

    pub fn tissue(&self, idx: usize) -> Option<Tissue> {
        Tissue::from_code(self.cells[idx])
    }

    pub fn set(&mut self, idx: usize, tissue: Option<Tissue>) {
        self.cells[idx] = tissue.map_or(0, Tissue::code);
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn tissue_count(&self, t: Tissue) -> usize {
        let code = t.code();
        self.cells.iter().filter(|&&c| c == code).count()
    }

    /// Occupied voxels of `self` that are empty in `other`.
    pub fn count_not_in(&self, other: &VoxelGrid) -> usize {
        self.cells
            .iter()
            .zip(&other.cells)
            .filter(|(a, b)| **a != 0 && **b == 0)
            .count()
    }

    pub fn read_json(reader: impl Read) -> Result<Self> {
        let file: VoxelGridFile = serde_json::from_reader(reader)?;
        file.into_grid()
    }

    pub fn write_json(&self, writer: impl Write) -> Result<()> {
        serde_json::to_writer(writer, &VoxelGridFile::from_grid(self))?;
        Ok(())
    }
}

impl SampledField {
    /// Thresholds the samples at the iso-level; labels come from the dominant
    /// contributor.
    pub fn voxel_grid(&self) -> VoxelGrid {
        let iso = self.iso_level();
        let cells = self
            .values()
            .iter()
            .zip(self.dominant_codes())
            .map(|(&v, &d)| if v >= iso { d } else { 0 })
            .collect();
        VoxelGrid {
            grid: *self.grid(),
            cells,
        }
    }
}

/// Voxelises the field on `grid`: occupied where the field at the voxel
/// centre reaches the iso-level.
pub fn voxelize(field: &MetaballField<'_>, grid: &GridSpec, exec: Execution) -> VoxelGrid {
    sample_field(field, grid, exec).voxel_grid()
}

/// Run-length encoded on-disk form: `runs` holds `[code, length]` pairs in
/// storage order (x fastest).
#[derive(Debug, Serialize, Deserialize)]
struct VoxelGridFile {
    grid: GridSpec,
    runs: Vec<[u32; 2]>,
}

impl VoxelGridFile {
    fn from_grid(g: &VoxelGrid) -> Self {
        let mut runs: Vec<[u32; 2]> = Vec::new();
        for &c in &g.cells {
            match runs.last_mut() {
                Some(last) if last[0] == c as u32 => last[1] += 1,
                _ => runs.push([c as u32, 1]),
            }
        }
        VoxelGridFile { grid: g.grid, runs }
    }

    fn into_grid(self) -> Result<VoxelGrid> {
        if self.grid.dims.contains(&0) {
            return Err(Error::InvalidDims(self.grid.dims));
        }
        let mut cells = Vec::with_capacity(self.grid.len());
        for [code, len] in self.runs {
            if code > 3 {
                return Err(Error::invalid(format!("invalid voxel code {code}")));
            }
            cells.extend(std::iter::repeat_n(code as u8, len as usize));
        }
        VoxelGrid::from_cells(self.grid, cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::build_field;
    use crate::volume::{Aabb, Sphere, SpherePackVolume};
    use nalgebra::Vector3;

    #[test]
    fn sphere_occupancy_matches_analytic_volume() {
        let v = SpherePackVolume::new(vec![
            Sphere::new(Vector3::zeros(), 10.0, Tissue::Dentin).unwrap()
        ])
        .unwrap();
        let b = Aabb::new(Vector3::repeat(-15.0), Vector3::repeat(15.0));
        let g = GridSpec::new([90, 90, 90], &b).unwrap();
        let grid = voxelize(&build_field(&v).unwrap(), &g, Execution::Serial);
        let expected = 4.0 / 3.0 * std::f64::consts::PI * 1000.0 / g.cell_volume();
        let got = grid.occupied_count() as f64;
        assert!((got - expected).abs() / expected < 0.05, "{got} vs {expected}");
        assert_eq!(grid.tissue_count(Tissue::Dentin), grid.occupied_count());
    }

    #[test]
    fn fully_drilled_volume_is_empty() {
        let mut v = SpherePackVolume::new(vec![
            Sphere::new(Vector3::zeros(), 1.0, Tissue::Pulp).unwrap()
        ])
        .unwrap();
        v.spheres_mut()[0].removed = true;
        let b = Aabb::new(Vector3::repeat(-2.0), Vector3::repeat(2.0));
        let g = GridSpec::new([8, 8, 8], &b).unwrap();
        assert_eq!(voxelize(&build_field(&v).unwrap(), &g, Execution::Serial).occupied_count(), 0);
    }

    #[test]
    fn grid_filling_field_occupies_everything() {
        let v = SpherePackVolume::new(vec![
            Sphere::new(Vector3::zeros(), 10.0, Tissue::Enamel).unwrap()
        ])
        .unwrap();
        let b = Aabb::new(Vector3::repeat(-2.0), Vector3::repeat(2.0));
        let g = GridSpec::new([7, 9, 5], &b).unwrap();
        let grid = voxelize(&build_field(&v).unwrap(), &g, Execution::Serial);
        assert_eq!(grid.occupied_count(), g.len());
    }

    #[test]
    fn json_round_trip() {
        let b = Aabb::new(Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0));
        let g = GridSpec::new([4, 5, 6], &b).unwrap();
        let grid = VoxelGrid::from_fn(g, Tissue::Pulp, |i, j, k| (i + j + k) % 3 == 0);
        let mut buf = Vec::new();
        grid.write_json(&mut buf).unwrap();
        assert_eq!(VoxelGrid::read_json(buf.as_slice()).unwrap(), grid);
    }

    #[test]
    fn truncated_runs_are_rejected() {
        let text = r#"{"grid":{"dims":[2,2,2],"origin":[0,0,0],"cell":[1,1,1]},"runs":[[0,7]]}"#;
        assert!(matches!(VoxelGrid::read_json(text.as_bytes()), Err(Error::GridMismatch(_))));
    }
}
