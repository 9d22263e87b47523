//! Full-resolution segmentation of a scan.
//!
//! The network consumes a fixed number of points per pass, but a scan
//! must come back with a label on every face. So: extract features once
//! at full resolution, split a seeded random permutation of the faces
//! into ceil(total / chunk) equal chunks, pad the final chunk by
//! resampling faces that are already covered, run each chunk through the
//! network, and average the logits wherever a face was visited more than
//! once. The argmax of the averaged logits is the final label; there is
//! no smoothing or post-processing after that.
//!
//! The same (network, mesh, seed) triple always produces bit-identical
//! labels: the permutation, the padding draws, and every forward pass
//! are deterministic.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::classes::{Jaw, NUM_CLASSES};
use crate::fsio::atomic_write;
use crate::geometry::{build_features, GeometryError};
use crate::mesh::{FaceAdjacency, MeshError, TriMesh};
use crate::nn::autograd::softmax_rows_value;
use crate::nn::network::{Network, NetworkError};

#[derive(Debug, Error)]
pub enum InferError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("chunk size {n_points} must exceed the neighbor count {k_nn}")]
    ChunkTooSmall { n_points: usize, k_nn: usize },
    #[error("{labels} labels for a mesh with {faces} faces")]
    LabelCount { labels: usize, faces: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct InferOptions {
    /// Points per network pass.
    pub n_points: usize,
    /// Seed for the cover permutation and padding draws.
    pub seed: u64,
    /// Also return averaged per-face class probabilities.
    pub with_probs: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            n_points: 10_000,
            seed: 0,
            with_probs: false,
        }
    }
}

/// Labels for every face of a scan, plus bookkeeping about the cover.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentationResult {
    pub face_labels: Vec<u8>,
    /// Binary tooth/gingiva decision per face, from the auxiliary head.
    pub aux_labels: Vec<u8>,
    /// Averaged class probabilities per face, when requested.
    #[serde(skip)]
    pub probs: Option<Array2<f32>>,
    /// Network passes used to cover the mesh.
    pub rounds: usize,
    /// Padding rows appended to the final chunk.
    pub duplicates: usize,
    pub seed: u64,
    pub n_points: usize,
}

fn first_argmax(row: &[f32]) -> u8 {
    let mut best = 0usize;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best as u8
}

/// Label every face of `mesh` with the given network.
pub fn segment_mesh(
    network: &Network<f32>,
    mesh: &TriMesh,
    jaw: Jaw,
    opts: &InferOptions,
) -> Result<SegmentationResult, InferError> {
    let k_nn = network.config().k_nn;
    if opts.n_points <= k_nn {
        return Err(InferError::ChunkTooSmall {
            n_points: opts.n_points,
            k_nn,
        });
    }

    let adj = FaceAdjacency::build(mesh);
    let cloud = build_features(mesh, &adj, jaw);
    let features = cloud.features().mapv(|x| x as f32);
    let category = cloud.category().map(|c| c as f32);

    let total = mesh.face_count();
    let chunk = opts.n_points;
    let rounds = total.div_ceil(chunk);
    let duplicates = rounds * chunk - total;

    // Random cover: a permutation of all faces, then padding drawn from
    // the faces already covered so every slot is a valid row.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut slots: Vec<u32> = (0..total as u32).collect();
    slots.shuffle(&mut rng);
    for _ in 0..duplicates {
        let copy = slots[rng.random_range(0..total)];
        slots.push(copy);
    }

    let mut seg_sum = Array2::<f32>::zeros((total, NUM_CLASSES));
    let mut aux_sum = Array2::<f32>::zeros((total, 2));
    let mut visits = vec![0u32; total];

    for round in 0..rounds {
        let part = &slots[round * chunk..(round + 1) * chunk];
        let mut batch = Array2::<f32>::zeros((chunk, features.ncols()));
        for (row, &face) in part.iter().enumerate() {
            batch.row_mut(row).assign(&features.row(face as usize));
        }
        let (seg_logits, aux_logits) = network.forward_infer(&batch, category)?;
        for (row, &face) in part.iter().enumerate() {
            let f = face as usize;
            for c in 0..NUM_CLASSES {
                seg_sum[[f, c]] += seg_logits[[row, c]];
            }
            aux_sum[[f, 0]] += aux_logits[[row, 0]];
            aux_sum[[f, 1]] += aux_logits[[row, 1]];
            visits[f] += 1;
        }
    }

    let mut face_labels = Vec::with_capacity(total);
    let mut aux_labels = Vec::with_capacity(total);
    for f in 0..total {
        let inv = 1.0 / visits[f] as f32;
        for c in 0..NUM_CLASSES {
            seg_sum[[f, c]] *= inv;
        }
        aux_sum[[f, 0]] *= inv;
        aux_sum[[f, 1]] *= inv;
        face_labels.push(first_argmax(seg_sum.row(f).as_slice().unwrap()));
        aux_labels.push(first_argmax(aux_sum.row(f).as_slice().unwrap()));
    }

    let probs = opts.with_probs.then(|| softmax_rows_value(&seg_sum));
    Ok(SegmentationResult {
        face_labels,
        aux_labels,
        probs,
        rounds,
        duplicates,
        seed: opts.seed,
        n_points: chunk,
    })
}

/// Display color for a class id. Gingiva is a fixed pink; tooth classes
/// get well-separated hues from a golden-angle walk around the color
/// wheel at fixed saturation and value.
pub fn class_color(class: u8) -> [u8; 3] {
    if class == 0 {
        return [255, 192, 203];
    }
    let hue = (class as f64 * 137.508) % 360.0;
    let (s, v) = (0.75, 0.95);
    let c = v * s;
    let x = c * (1.0 - ((hue / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Write the mesh with per-face label colors as an OBJ with vertex
/// colors. Vertices are duplicated per face so each face can carry a
/// flat color; viewers without color support still see the geometry.
pub fn export_colored_obj(
    mesh: &TriMesh,
    labels: &[u8],
    path: &Path,
) -> Result<(), InferError> {
    if labels.len() != mesh.face_count() {
        return Err(InferError::LabelCount {
            labels: labels.len(),
            faces: mesh.face_count(),
        });
    }
    let mut out = String::new();
    out.push_str("# per-face class colors; vertices duplicated per face\n");
    for (f, &label) in labels.iter().enumerate() {
        let [r, g, b] = class_color(label);
        let (r, g, b) = (
            r as f64 / 255.0,
            g as f64 / 255.0,
            b as f64 / 255.0,
        );
        for p in mesh.face_points(f) {
            writeln!(
                out,
                "v {:.6} {:.6} {:.6} {:.4} {:.4} {:.4}",
                p.x, p.y, p.z, r, g, b
            )
            .expect("writing to a string cannot fail");
        }
        let base = 3 * f + 1;
        writeln!(out, "f {} {} {}", base, base + 1, base + 2)
            .expect("writing to a string cannot fail");
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

/// Per-face class probabilities as CSV: face index then one column per
/// class.
pub fn export_probs_csv(probs: &Array2<f32>, path: &Path) -> Result<(), InferError> {
    let mut out = String::from("face");
    for c in 0..probs.ncols() {
        write!(out, ",p{c:02}").expect("writing to a string cannot fail");
    }
    out.push('\n');
    for (f, row) in probs.rows().into_iter().enumerate() {
        write!(out, "{f}").expect("writing to a string cannot fail");
        for &p in row {
            write!(out, ",{p:.6}").expect("writing to a string cannot fail");
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}
