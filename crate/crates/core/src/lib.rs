//! Tooth segmentation for intraoral scan (IOS) meshes.
//!
//! The pipeline turns a triangular scan mesh into a per-face labelling over
//! 33 classes (32 permanent teeth plus the gingiva):
//!
//! 1. [`mesh`] — parse and validate OBJ / ASCII-PLY / ASCII-STL meshes,
//!    compute face centroids, normals, areas and the face-adjacency graph.
//! 2. [`geometry`] — discrete curvature signals (Gaussian, mean, and the
//!    normal-angle "point curvature"), the 8-dimensional per-point feature
//!    matrix, and fixed-size downsampling.
//! 3. [`nn`] — the segmentation network: EdgeConv point embedding, a
//!    self-attention encoder, a category-conditioned global feature and two
//!    per-point heads (33-way tooth classes, 2-way tooth/gingiva), with full
//!    reverse-mode gradients.
//! 4. [`loss`] — cross-entropy heads plus the curvature-guided focal loss
//!    over the hard-point set.
//! 5. [`train`] — the optimization loop, a synthetic jaw generator for
//!    desk-scale experiments, and checkpointing.
//! 6. [`infer`] — full-resolution chunked inference mapping predictions back
//!    onto every mesh face.
//! 7. [`metrics`] — accuracy / mIoU / DSC reporting per jaw and aggregate.

pub mod classes;
pub mod fsio;
pub mod geometry;
pub mod infer;
pub mod labels;
pub mod loss;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod train;

pub use classes::{Jaw, GINGIVA, NUM_CLASSES};
pub use infer::{segment_mesh, InferOptions, SegmentationResult};
pub use labels::LabelMap;
pub use loss::{LossWeights, RankingSignal};
pub use mesh::{FaceAdjacency, MeshError, TriMesh};
pub use metrics::{evaluate, MetricReport};
pub use nn::network::{Network, NetworkConfig};
pub use train::{TrainConfig, Trainer};
