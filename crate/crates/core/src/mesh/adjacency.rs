//! Face-to-face adjacency over shared edges.
//!
//! First-order neighbors share at least one edge. On a non-manifold edge
//! (more than two incident faces) all incident faces are mutual neighbors.
//! Second-order neighborhoods are everything reachable within two edge
//! hops, excluding the face itself; this is the default neighborhood for
//! the normal-deviation curvature signal.

use std::collections::HashMap;

use super::TriMesh;

/// Precomputed 1-hop and 2-hop face neighborhoods; lists are sorted and
/// duplicate-free.
#[derive(Debug, Clone)]
pub struct FaceAdjacency {
    first: Vec<Vec<u32>>,
    second: Vec<Vec<u32>>,
}

impl FaceAdjacency {
    pub fn build(mesh: &TriMesh) -> Self {
        let n = mesh.face_count();

        // Map each undirected edge (lo, hi) to its incident faces.
        let mut edge_faces: HashMap<(u32, u32), Vec<u32>> = HashMap::with_capacity(n * 3 / 2);
        for (f, idx) in mesh.faces().iter().enumerate() {
            for k in 0..3 {
                let a = idx[k];
                let b = idx[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                edge_faces.entry(key).or_default().push(f as u32);
            }
        }

        let mut first: Vec<Vec<u32>> = vec![Vec::new(); n];
        for incident in edge_faces.values() {
            if incident.len() < 2 {
                continue;
            }
            for (i, &f) in incident.iter().enumerate() {
                for &g in &incident[i + 1..] {
                    if f != g {
                        first[f as usize].push(g);
                        first[g as usize].push(f);
                    }
                }
            }
        }
        for list in &mut first {
            list.sort_unstable();
            list.dedup();
        }

        let mut second: Vec<Vec<u32>> = vec![Vec::new(); n];
        for f in 0..n {
            let mut reach: Vec<u32> = first[f].clone();
            for &g in &first[f] {
                reach.extend_from_slice(&first[g as usize]);
            }
            reach.sort_unstable();
            reach.dedup();
            reach.retain(|&g| g != f as u32);
            second[f] = reach;
        }

        FaceAdjacency { first, second }
    }

    pub fn face_count(&self) -> usize {
        self.first.len()
    }

    /// Faces sharing an edge with `f`.
    pub fn first_order(&self, f: usize) -> &[u32] {
        &self.first[f]
    }

    /// Faces within two edge hops of `f`, excluding `f`.
    pub fn second_order(&self, f: usize) -> &[u32] {
        &self.second[f]
    }
}
