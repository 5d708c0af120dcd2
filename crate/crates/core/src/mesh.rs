//! Indexed triangle meshes, topology checks and ASCII PLY I/O.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::{Isometry3, Point3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

/// Edge incidence summary used for watertightness and Euler checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeReport {
    pub edges: usize,
    /// Edges used by exactly one triangle.
    pub boundary: usize,
    /// Edges used by more than two triangles.
    pub non_manifold: usize,
    /// Interior edges traversed in the same direction by both triangles.
    pub inconsistent: usize,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Checks index ranges and unit normals.
    pub fn validate(&self) -> Result<()> {
        if self.normals.len() != self.vertices.len() {
            return Err(Error::invalid("normal count differs from vertex count"));
        }
        let n = self.vertices.len() as u32;
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::invalid(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if let Some((i, _)) = self
            .normals
            .iter()
            .enumerate()
            .find(|(_, nrm)| (nrm.norm() - 1.0).abs() > 1e-6)
        {
            return Err(Error::invalid(format!("normal {i} is not unit length")));
        }
        Ok(())
    }

    pub fn edge_report(&self) -> EdgeReport {
        // (lo, hi) -> (uses, uses in lo->hi direction)
        let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let entry = edges.entry(key).or_insert((0, 0));
                entry.0 += 1;
                if a < b {
                    entry.1 += 1;
                }
            }
        }
        let mut report = EdgeReport {
            edges: edges.len(),
            boundary: 0,
            non_manifold: 0,
            inconsistent: 0,
        };
        for &(uses, forward) in edges.values() {
            match uses {
                1 => report.boundary += 1,
                2 if forward != 1 => report.inconsistent += 1,
                2 => {}
                _ => report.non_manifold += 1,
            }
        }
        report
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let r = self.edge_report();
        !self.triangles.is_empty() && r.boundary == 0 && r.non_manifold == 0
    }

    /// V − E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_report().edges as i64 + self.triangles.len() as i64
    }

    /// Geometric (unnormalised) normal of triangle `t`, following its winding.
    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        (b - a).cross(&(c - a))
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| (iso * Point3::from(*v)).coords)
                .collect(),
            normals: self.normals.iter().map(|n| iso.rotation * n).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            normals: self.normals.clone(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn write_ply(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", self.vertices.len())?;
        for p in ["x", "y", "z", "nx", "ny", "nz"] {
            writeln!(w, "property double {p}")?;
        }
        writeln!(w, "element face {}", self.triangles.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
        writeln!(w, "end_header")?;
        for (v, n) in self.vertices.iter().zip(&self.normals) {
            writeln!(w, "{} {} {} {} {} {}", v.x, v.y, v.z, n.x, n.y, n.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Reads the ASCII PLY subset written by [`TriangleMesh::write_ply`].
    pub fn read_ply(r: impl BufRead) -> Result<TriangleMesh> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(Error::invalid(format!("unexpected end of PLY while reading {what}"))),
            }
        };
        let (n, magic) = next("magic")?;
        if magic.trim() != "ply" {
            return Err(Error::parse(n, "missing 'ply' magic"));
        }
        let mut n_vertices = 0usize;
        let mut n_faces = 0usize;
        let mut vertex_props = 0usize;
        let mut in_vertex = false;
        loop {
            let (n, line) = next("header")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["format", "ascii", _] => {}
                ["format", ..] => return Err(Error::parse(n, "only ASCII PLY is supported")),
                ["element", "vertex", c] => {
                    n_vertices = c.parse().map_err(|_| Error::parse(n, "bad vertex count"))?;
                    in_vertex = true;
                }
                ["element", "face", c] => {
                    n_faces = c.parse().map_err(|_| Error::parse(n, "bad face count"))?;
                    in_vertex = false;
                }
                ["property", "list", ..] => {}
                ["property", _, _] if in_vertex => vertex_props += 1,
                ["end_header"] => break,
                _ => {}
            }
        }
        let mut mesh = TriangleMesh::default();
        for _ in 0..n_vertices {
            let (n, line) = next("vertices")?;
            let vals = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::parse(n, format!("bad number '{s}'"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() < 3 || vals.len() != vertex_props {
                return Err(Error::parse(n, "wrong number of vertex properties"));
            }
            mesh.vertices.push(Vector3::new(vals[0], vals[1], vals[2]));
            if vals.len() >= 6 {
                mesh.normals.push(Vector3::new(vals[3], vals[4], vals[5]));
            }
        }
        for _ in 0..n_faces {
            let (n, line) = next("faces")?;
            let vals = line
                .split_whitespace()
                .map(|s| s.parse::<u32>().map_err(|_| Error::parse(n, format!("bad index '{s}'"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 4 || vals[0] != 3 {
                return Err(Error::parse(n, "only triangular faces are supported"));
            }
            mesh.triangles.push([vals[1], vals[2], vals[3]]);
        }
        if mesh.normals.is_empty() {
            mesh.normals = vec![Vector3::z(); mesh.vertices.len()];
        }
        mesh.validate()?;
        Ok(mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriangleMesh {
        let vertices = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let c = Vector3::repeat(0.25);
        TriangleMesh {
            normals: vertices.iter().map(|v| (v - c).normalize()).collect(),
            vertices,
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        }
    }

    #[test]
    fn tetrahedron_topology() {
        let m = tetrahedron();
        m.validate().unwrap();
        assert!(m.is_watertight());
        assert_eq!(m.edge_report().inconsistent, 0);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn open_mesh_is_not_watertight() {
        let mut m = tetrahedron();
        m.triangles.pop();
        assert!(!m.is_watertight());
        assert_eq!(m.edge_report().boundary, 3);
    }

    #[test]
    fn out_of_range_index_fails_validation() {
        let mut m = tetrahedron();
        m.triangles.push([0, 1, 9]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn ply_round_trip() {
        let m = tetrahedron();
        let mut buf = Vec::new();
        m.write_ply(&mut buf).unwrap();
        let back = TriangleMesh::read_ply(buf.as_slice()).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn ply_errors_carry_line_numbers() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nelement face 0\nend_header\n1 2 zz\n";
        let err = TriangleMesh::read_ply(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 9"), "{err}");
    }
}
