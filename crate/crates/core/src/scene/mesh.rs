//! Triangle meshes from the `v`/`f` subset of Wavefront OBJ.

use std::path::Path;

use super::geometry::{hits_aabb, intersect_triangle, Ray, Vec3};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    triangles: Vec<[Vec3; 3]>,
    lo: Vec3,
    hi: Vec3,
}

impl Mesh {
    pub fn new(triangles: Vec<[Vec3; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for v in triangles.iter().flatten() {
            if !v.is_finite() {
                return Err(Error::invalid("mesh vertex is not finite"));
            }
            lo = lo.min_elem(*v);
            hi = hi.max_elem(*v);
        }
        Ok(Mesh { triangles, lo, hi })
    }

    /// Parse OBJ text. Only `v` and `f` records are read; faces with more
    /// than three vertices are fan-triangulated. Other records are skipped.
    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("v") => {
                    let coords: Vec<f64> = fields
                        .take(3)
                        .map(|f| f.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::invalid(format!("obj line {lineno}: bad vertex: {e}")))?;
                    if coords.len() != 3 {
                        return Err(Error::invalid(format!("obj line {lineno}: vertex needs 3 coordinates")));
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<i64> = fields
                        .map(|f| f.split('/').next().unwrap_or("").parse::<i64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::invalid(format!("obj line {lineno}: bad face index: {e}")))?;
                    if idx.len() < 3 {
                        return Err(Error::invalid(format!("obj line {lineno}: face needs at least 3 vertices")));
                    }
                    faces.push((lineno, idx));
                }
                _ => {}
            }
        }
        let mut triangles = Vec::new();
        for (lineno, idx) in faces {
            // Indices are 1-based; negative values count back from the
            // vertices defined so far (we resolve against the full list).
            let resolve = |i: i64| -> Result<Vec3> {
                let n = vertices.len() as i64;
                let k = if i > 0 { i - 1 } else { n + i };
                if i == 0 || k < 0 || k >= n {
                    return Err(Error::invalid(format!("obj line {lineno}: vertex index {i} out of range")));
                }
                Ok(vertices[k as usize])
            };
            let first = resolve(idx[0])?;
            for w in idx[1..].windows(2) {
                triangles.push([first, resolve(w[0])?, resolve(w[1])?]);
            }
        }
        Mesh::new(triangles)
    }

    pub fn load_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mesh::parse_obj(&text)
    }

    /// Centre the bounding box on the origin and scale to the given
    /// bounding-sphere radius.
    pub fn normalized(&self, radius: f64) -> Mesh {
        let center = (self.lo + self.hi) * 0.5;
        let extent = self
            .triangles
            .iter()
            .flatten()
            .map(|v| (*v - center).length())
            .fold(0.0, f64::max)
            .max(1e-12);
        let s = radius / extent;
        let tris = self
            .triangles
            .iter()
            .map(|t| t.map(|v| (v - center) * s))
            .collect();
        Mesh::new(tris).expect("scaling preserves validity")
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.triangles
    }

    pub fn bounding_radius(&self) -> f64 {
        self.triangles.iter().flatten().map(|v| v.length()).fold(0.0, f64::max)
    }

    pub(crate) fn intersect(&self, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
        if !hits_aabb(ray, self.lo, self.hi, t_max) {
            return None;
        }
        let mut best: Option<(f64, Vec3)> = None;
        for tri in &self.triangles {
            if let Some((t, n)) = intersect_triangle(ray, tri, best.map_or(t_max, |b| b.0)) {
                best = Some((t, n));
            }
        }
        best.map(|(t, n)| (t, n.normalize()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = "# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n";

    #[test]
    fn quad_fan_triangulates() {
        let m = Mesh::parse_obj(QUAD).unwrap();
        assert_eq!(m.triangles().len(), 2);
    }

    #[test]
    fn negative_indices() {
        let m = Mesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.triangles()[0][1], Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn bad_index_rejected() {
        let err = Mesh::parse_obj("v 0 0 0\nf 1 2 3\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn empty_mesh_rejected() {
        assert!(Mesh::parse_obj("v 0 0 0\n").is_err());
    }

    #[test]
    fn normalized_radius() {
        let m = Mesh::parse_obj(QUAD).unwrap().normalized(0.5);
        assert!((m.bounding_radius() - 0.5).abs() < 1e-12);
    }
}
