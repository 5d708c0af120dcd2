//! Marching cubes over a sampled field.
//!
//! The 256-entry case table is derived at first use instead of being typed in.
//! For every corner configuration the iso-contour on each cube face is built
//! from corner signs alone, with ambiguous faces always separating the inside
//! corners. Neighbouring cubes therefore agree on every shared face, which is
//! what makes closed iso-surfaces come out watertight. The face segments are
//! chained into closed loops and fan-triangulated; loops are oriented so that
//! triangle normals point from inside (field ≥ iso) towards outside.

use std::sync::OnceLock;

use nalgebra::Vector3;

use crate::exec::{for_each_chunk_mut, map_indexed, Execution};
use crate::field::{sample_field, GridSpec, MetaballField, SampledField};
use crate::mesh::TriangleMesh;

/// Cube edge as (lower corner, axis). Corner bits: x = 1, y = 2, z = 4.
const EDGES: [(u8, u8); 12] = [
    (0, 0),
    (2, 0),
    (4, 0),
    (6, 0),
    (0, 1),
    (1, 1),
    (4, 1),
    (5, 1),
    (0, 2),
    (1, 2),
    (2, 2),
    (3, 2),
];

fn edge_between(p: u8, q: u8) -> u8 {
    let (lo, hi) = (p.min(q), p.max(q));
    let axis = (hi ^ lo).trailing_zeros() as u8;
    EDGES
        .iter()
        .position(|&e| e == (lo, axis))
        .expect("corners are adjacent") as u8
}

/// Corners of each face in counter-clockwise order seen from outside the cube.
fn face_cycles() -> [[u8; 4]; 6] {
    let mut faces = [[0u8; 4]; 6];
    for axis in 0..3u8 {
        let b = (axis + 1) % 3;
        let c = (axis + 2) % 3;
        for side in 0..2u8 {
            let (u, v) = if side == 1 { (b, c) } else { (c, b) };
            let base = side << axis;
            let quad = [(0, 0), (1, 0), (1, 1), (0, 1)];
            let face = &mut faces[(axis * 2 + side) as usize];
            for (n, &(du, dv)) in quad.iter().enumerate() {
                face[n] = base | (du << u) | (dv << v);
            }
        }
    }
    faces
}

/// Triangles (as cube-edge triples) for every corner configuration.
pub(crate) fn case_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(build_case_table)
}

fn build_case_table() -> [Vec<[u8; 3]>; 256] {
    let faces = face_cycles();
    std::array::from_fn(|config| {
        let inside = |c: u8| (config >> c) & 1 == 1;
        let mut succ: [Option<u8>; 12] = [None; 12];
        for face in &faces {
            for k in 0..4 {
                let (a, b) = (face[k], face[(k + 1) % 4]);
                if inside(a) || !inside(b) {
                    continue;
                }
                // Entering the inside run at edge a-b; it ends at the first
                // edge that leaves it.
                let exit = (1..4)
                    .map(|m| (face[(k + m) % 4], face[(k + m + 1) % 4]))
                    .find(|&(p, q)| inside(p) && !inside(q))
                    .expect("every inside run has an exit");
                let from = edge_between(a, b);
                debug_assert!(succ[from as usize].is_none());
                succ[from as usize] = Some(edge_between(exit.0, exit.1));
            }
        }
        let mut tris = Vec::new();
        let mut seen = [false; 12];
        for start in 0..12u8 {
            if seen[start as usize] || succ[start as usize].is_none() {
                continue;
            }
            let mut poly = Vec::new();
            let mut e = start;
            while !seen[e as usize] {
                seen[e as usize] = true;
                poly.push(e);
                e = succ[e as usize].expect("loops are closed");
            }
            tris.extend(triangulate(&poly).expect("every loop has a face-safe triangulation"));
        }
        tris
    })
}

/// Faces (bit `2 * axis + side`) that contain a cube edge.
fn edge_faces(edge: u8) -> u8 {
    let (corner, axis) = EDGES[edge as usize];
    (0..3u8)
        .filter(|&b| b != axis)
        .fold(0, |m, b| m | 1 << (2 * b + ((corner >> b) & 1)))
}

/// Triangulates a loop without any diagonal joining two crossings on the
/// same cube face. The neighbouring cube may pick that very diagonal too,
/// which would put four triangles on one mesh edge.
fn triangulate(poly: &[u8]) -> Option<Vec<[u8; 3]>> {
    let n = poly.len();
    if n == 3 {
        return Some(vec![[poly[0], poly[1], poly[2]]]);
    }
    let allowed = |a: u8, b: u8| edge_faces(a) & edge_faces(b) == 0;
    for k in 1..n - 1 {
        if (k != 1 && !allowed(poly[0], poly[k])) || (k != n - 2 && !allowed(poly[k], poly[n - 1])) {
            continue;
        }
        let mut tris = vec![[poly[0], poly[k], poly[n - 1]]];
        if k >= 2 {
            let Some(t) = triangulate(&poly[..=k]) else { continue };
            tris.extend(t);
        }
        if n - 1 - k >= 2 {
            let Some(t) = triangulate(&poly[k..]) else { continue };
            tris.extend(t);
        }
        return Some(tris);
    }
    None
}

/// Samples `field` on `grid` and extracts its iso-surface.
pub fn extract_mesh(field: &MetaballField<'_>, grid: &GridSpec, exec: Execution) -> TriangleMesh {
    sample_field(field, grid, exec).mesh(exec)
}

impl SampledField {
    /// Marching cubes over the voxel-centre lattice.
    ///
    /// Vertices are created once per crossing lattice edge, plane by plane,
    /// and triangles are emitted per slab of cubes; both passes concatenate
    /// their per-plane output in order, so serial and parallel runs agree
    /// exactly.
    pub fn mesh(&self, exec: Execution) -> TriangleMesh {
        let grid = *self.grid();
        let [nx, ny, nz] = grid.dims;
        let iso = self.iso_level();
        let values = self.values();
        let plane = nx * ny;

        let gradient = |i: usize, j: usize, k: usize| -> Vector3<f64> {
            let at = |i, j, k| values[grid.index(i, j, k)];
            let diff = |lo: f64, hi: f64, steps: f64, h: f64| (hi - lo) / (steps * h);
            let gx = match (i > 0, i + 1 < nx) {
                (true, true) => diff(at(i - 1, j, k), at(i + 1, j, k), 2.0, grid.cell.x),
                (false, true) => diff(at(i, j, k), at(i + 1, j, k), 1.0, grid.cell.x),
                (true, false) => diff(at(i - 1, j, k), at(i, j, k), 1.0, grid.cell.x),
                _ => 0.0,
            };
            let gy = match (j > 0, j + 1 < ny) {
                (true, true) => diff(at(i, j - 1, k), at(i, j + 1, k), 2.0, grid.cell.y),
                (false, true) => diff(at(i, j, k), at(i, j + 1, k), 1.0, grid.cell.y),
                (true, false) => diff(at(i, j - 1, k), at(i, j, k), 1.0, grid.cell.y),
                _ => 0.0,
            };
            let gz = match (k > 0, k + 1 < nz) {
                (true, true) => diff(at(i, j, k - 1), at(i, j, k + 1), 2.0, grid.cell.z),
                (false, true) => diff(at(i, j, k), at(i, j, k + 1), 1.0, grid.cell.z),
                (true, false) => diff(at(i, j, k - 1), at(i, j, k), 1.0, grid.cell.z),
                _ => 0.0,
            };
            Vector3::new(gx, gy, gz)
        };

        let mut inside = vec![0u8; values.len()];
        for_each_chunk_mut(exec, &mut inside, plane, |k, out| {
            let vals = &values[k * plane..(k + 1) * plane];
            for (o, &v) in out.iter_mut().zip(vals) {
                *o = u8::from(v >= iso);
            }
        });
        let inside = &inside;

        // Pass 1: one vertex per crossing lattice edge, keyed by its lower
        // end point and axis.
        let vertex_planes = map_indexed(exec, nz, |k| {
            let mut ids = vec![u32::MAX; plane * 3];
            let mut verts = Vec::new();
            let mut normals = Vec::new();
            let mut emit = |p: usize, q: usize, axis: usize, ids: &mut [u32]| {
                let [i, j, k] = grid.coords(p);
                let [qi, qj, qk] = grid.coords(q);
                let (v0, v1) = (values[p], values[q]);
                let t = (iso - v0) / (v1 - v0);
                let a = grid.center(i, j, k);
                let b = grid.center(qi, qj, qk);
                let g0 = gradient(i, j, k);
                let g = g0 + (gradient(qi, qj, qk) - g0) * t;
                let len = g.norm();
                let normal = if len.is_finite() && len > 1e-300 {
                    -g / len
                } else {
                    let mut n = Vector3::zeros();
                    n[axis] = if inside[p] == 1 { 1.0 } else { -1.0 };
                    n
                };
                ids[(p - k * plane) * 3 + axis] = verts.len() as u32;
                verts.push(a + (b - a) * t);
                normals.push(normal);
            };
            for j in 0..ny {
                let row = k * plane + j * nx;
                for i in 0..nx {
                    let p = row + i;
                    let here = inside[p];
                    if i + 1 < nx && inside[p + 1] != here {
                        emit(p, p + 1, 0, &mut ids);
                    }
                    if j + 1 < ny && inside[p + nx] != here {
                        emit(p, p + nx, 1, &mut ids);
                    }
                    if k + 1 < nz && inside[p + plane] != here {
                        emit(p, p + plane, 2, &mut ids);
                    }
                }
            }
            (ids, verts, normals)
        });

        let mut offsets = Vec::with_capacity(nz);
        let mut total = 0u32;
        for (_, v, _) in &vertex_planes {
            offsets.push(total);
            total += v.len() as u32;
        }

        // Pass 2: triangles per slab of cubes between planes k and k+1. A
        // column code packs the four corners sharing an x index as bits
        // (y, z); two adjacent columns give the cube configuration.
        let table = case_table();
        let spread = |col: u8| -> usize {
            let col = col as usize;
            (col & 1) | ((col >> 1) & 1) << 2 | ((col >> 2) & 1) << 4 | ((col >> 3) & 1) << 6
        };
        let tri_slabs = map_indexed(exec, nz.saturating_sub(1), |k| {
            let mut tris = Vec::new();
            for j in 0..ny - 1 {
                let base = k * plane + j * nx;
                let column = |i: usize| -> u8 {
                    let p = base + i;
                    inside[p] | inside[p + nx] << 1 | inside[p + plane] << 2 | inside[p + plane + nx] << 3
                };
                let mut left = column(0);
                for i in 0..nx - 1 {
                    let right = column(i + 1);
                    let config = spread(left) | spread(right) << 1;
                    left = right;
                    if config == 0 || config == 255 {
                        continue;
                    }
                    let vertex_of = |edge: u8| -> u32 {
                        let (corner, axis) = EDGES[edge as usize];
                        let (ci, cj, ck) = (
                            i + (corner & 1) as usize,
                            j + ((corner >> 1) & 1) as usize,
                            k + ((corner >> 2) & 1) as usize,
                        );
                        let local = vertex_planes[ck].0[(ci + nx * cj) * 3 + axis as usize];
                        debug_assert_ne!(local, u32::MAX);
                        offsets[ck] + local
                    };
                    for t in &table[config] {
                        tris.push([vertex_of(t[0]), vertex_of(t[1]), vertex_of(t[2])]);
                    }
                }
            }
            tris
        });

        let mut mesh = TriangleMesh {
            vertices: Vec::with_capacity(total as usize),
            normals: Vec::with_capacity(total as usize),
            triangles: Vec::with_capacity(tri_slabs.iter().map(Vec::len).sum()),
        };
        for (_, v, n) in vertex_planes {
            mesh.vertices.extend(v);
            mesh.normals.extend(n);
        }
        for t in tri_slabs {
            mesh.triangles.extend(t);
        }
        mesh
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Aabb;

    #[test]
    fn trivial_configurations_are_empty() {
        let t = case_table();
        assert!(t[0].is_empty());
        assert!(t[255].is_empty());
    }

    #[test]
    fn single_corner_yields_one_outward_triangle() {
        let t = case_table();
        assert_eq!(t[1].len(), 1);
        // Normal of the corner-0 triangle points away from corner 0.
        let mid = |e: u8| {
            let (c, axis) = EDGES[e as usize];
            let mut p = Vector3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64);
            p[axis as usize] += 0.5;
            p
        };
        let [a, b, c] = t[1][0].map(mid);
        let n = (b - a).cross(&(c - a));
        assert!(n.dot(&Vector3::repeat(1.0)) > 0.0);
    }

    #[test]
    fn no_diagonal_joins_crossings_on_one_face() {
        for tris in case_table().iter() {
            let mut uses = std::collections::HashMap::new();
            for t in tris {
                for k in 0..3 {
                    let (a, b) = (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]));
                    *uses.entry((a, b)).or_insert(0) += 1;
                }
            }
            for ((a, b), n) in uses {
                if n == 2 {
                    assert_eq!(edge_faces(a) & edge_faces(b), 0);
                }
            }
        }
    }

    #[test]
    fn complementary_counts_and_triangle_bounds() {
        let t = case_table();
        for (config, tris) in t.iter().enumerate() {
            assert!(tris.len() <= 12, "config {config} has {} triangles", tris.len());
            for tri in tris {
                assert!(tri.iter().all(|&e| e < 12));
            }
        }
    }

    /// Every cube in isolation (one configuration padded by an outside ring)
    /// must close up; this exercises the face rule on all 256 cases.
    #[test]
    fn every_configuration_closes_when_isolated() {
        for config in 1..255usize {
            let b = Aabb::new(Vector3::zeros(), Vector3::repeat(4.0));
            let grid = GridSpec::new([4, 4, 4], &b).unwrap();
            let mut values = vec![0.0; grid.len()];
            for c in 0..8 {
                if (config >> c) & 1 == 1 {
                    values[grid.index(1 + (c & 1), 1 + ((c >> 1) & 1), 1 + ((c >> 2) & 1))] = 1.0;
                }
            }
            let s = SampledField::from_values(grid, 0.5, values).unwrap();
            let m = s.mesh(Execution::Serial);
            let r = m.edge_report();
            assert_eq!(r.boundary, 0, "config {config}");
            assert_eq!(r.non_manifold, 0, "config {config}");
            assert_eq!(r.inconsistent, 0, "config {config}");
        }
    }
}
