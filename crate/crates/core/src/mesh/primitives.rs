//! Analytic meshes used by oracle tests and the feature demos: a regular
//! tetrahedron, a flat triangulated grid, and an icosphere.

use std::collections::HashMap;

use nalgebra::Point3;

use super::TriMesh;

/// Regular tetrahedron with the given edge length, centered at the origin,
/// outward-facing windings.
pub fn tetrahedron(edge: f64) -> TriMesh {
    let s = edge / (2.0 * 2.0f64.sqrt());
    let v = vec![
        Point3::new(s, s, s),
        Point3::new(s, -s, -s),
        Point3::new(-s, s, -s),
        Point3::new(-s, -s, s),
    ];
    let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriMesh::new(v, f).expect("tetrahedron is valid")
}

/// Flat grid of `nx` by `ny` square cells (two triangles each) in the
/// z = 0 plane, normals facing +z.
pub fn planar_grid(nx: usize, ny: usize, spacing: f64) -> TriMesh {
    assert!(nx >= 1 && ny >= 1);
    let cols = nx + 1;
    let mut vertices = Vec::with_capacity(cols * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = (j * cols + i) as u32;
            let v10 = v00 + 1;
            let v01 = v00 + cols as u32;
            let v11 = v01 + 1;
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
    TriMesh::new(vertices, faces).expect("grid is valid")
}

/// Sphere approximation built by subdividing an icosahedron `subdivisions`
/// times and projecting every vertex to the given radius.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| project(Point3::new(x, y, z), radius))
    .collect();

    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(&mut vertices, &mut midpoints, a, b, radius);
            let bc = midpoint(&mut vertices, &mut midpoints, b, c, radius);
            let ca = midpoint(&mut vertices, &mut midpoints, c, a, radius);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }

    TriMesh::new(vertices, faces).expect("icosphere is valid")
}

fn project(p: Point3<f64>, radius: f64) -> Point3<f64> {
    Point3::from(p.coords * (radius / p.coords.norm()))
}

fn midpoint(
    vertices: &mut Vec<Point3<f64>>,
    cache: &mut HashMap<(u32, u32), u32>,
    a: u32,
    b: u32,
    radius: f64,
) -> u32 {
    let key = (a.min(b), a.max(b));
    *cache.entry(key).or_insert_with(|| {
        let m = Point3::from((vertices[a as usize].coords + vertices[b as usize].coords) / 2.0);
        vertices.push(project(m, radius));
        (vertices.len() - 1) as u32
    })
}
