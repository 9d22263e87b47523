//! Indexed triangular meshes with per-face derived quantities.
//!
//! A [`TriMesh`] owns vertex positions (millimetres) and vertex-index
//! triples, and caches for every face its centroid (the "gravity center"
//! that becomes the point in the point cloud), unit normal from winding
//! order, and area. Degenerate faces are dropped at construction and the
//! remaining faces re-indexed; out-of-range vertex indices are hard errors.

mod adjacency;
mod io;
pub mod primitives;

pub use adjacency::FaceAdjacency;
pub use io::{load_mesh, load_mesh_str, save_mesh, MeshFormat};

use nalgebra::{Point3, Unit, UnitVector3};
use thiserror::Error;

/// Faces with area below this (mm²) have no usable normal and are dropped.
pub const DEGENERATE_AREA: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("unsupported mesh format for {path:?} (expected .obj, .ply or .stl)")]
    UnknownFormat { path: String },
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("mesh has no non-degenerate faces")]
    Empty,
}

/// Validated indexed triangle mesh with cached per-face geometry.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    centroids: Vec<Point3<f64>>,
    normals: Vec<UnitVector3<f64>>,
    areas: Vec<f64>,
    dropped_faces: usize,
}

impl TriMesh {
    /// Validate and index a raw vertex/face soup.
    ///
    /// Out-of-range indices are an error naming the face. Zero-area faces
    /// are dropped with a warning and the face list re-indexed.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        for (face, idx) in faces.iter().enumerate() {
            for &i in idx {
                if i as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face,
                        index: i as usize,
                        vertex_count: vertices.len(),
                    });
                }
            }
        }

        let mut kept = Vec::with_capacity(faces.len());
        let mut centroids = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut areas = Vec::with_capacity(faces.len());
        let mut dropped = 0usize;

        for (face, idx) in faces.iter().enumerate() {
            let [a, b, c] = [
                vertices[idx[0] as usize],
                vertices[idx[1] as usize],
                vertices[idx[2] as usize],
            ];
            let cross = (b - a).cross(&(c - a));
            let doubled = cross.norm();
            let area = 0.5 * doubled;
            if area < DEGENERATE_AREA {
                log::warn!("dropping degenerate face {face} (area {area:.3e} mm^2)");
                dropped += 1;
                continue;
            }
            kept.push(*idx);
            centroids.push(Point3::from((a.coords + b.coords + c.coords) / 3.0));
            normals.push(Unit::new_unchecked(cross / doubled));
            areas.push(area);
        }

        if kept.is_empty() {
            return Err(MeshError::Empty);
        }

        Ok(TriMesh {
            vertices,
            faces: kept,
            centroids,
            normals,
            areas,
            dropped_faces: dropped,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> [u32; 3] {
        self.faces[f]
    }

    /// Positions of the three corners of face `f`.
    pub fn face_points(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn centroid(&self, f: usize) -> Point3<f64> {
        self.centroids[f]
    }

    pub fn centroids(&self) -> &[Point3<f64>] {
        &self.centroids
    }

    pub fn normal(&self, f: usize) -> UnitVector3<f64> {
        self.normals[f]
    }

    pub fn normals(&self) -> &[UnitVector3<f64>] {
        &self.normals
    }

    pub fn area(&self, f: usize) -> f64 {
        self.areas[f]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Number of degenerate faces dropped during validation.
    pub fn dropped_faces(&self) -> usize {
        self.dropped_faces
    }

    /// New mesh with every vertex mapped through `f`; derived quantities are
    /// recomputed. Connectivity is preserved.
    pub fn map_vertices(&self, f: impl Fn(Point3<f64>) -> Point3<f64>) -> Result<Self, MeshError> {
        let vertices = self.vertices.iter().map(|&p| f(p)).collect();
        TriMesh::new(vertices, self.faces.clone())
    }
}

/// Interior angle of a triangle at corner `at`, in radians.
pub(crate) fn corner_angle(at: Point3<f64>, b: Point3<f64>, c: Point3<f64>) -> f64 {
    let u = b - at;
    let v = c - at;
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0).acos()
}
