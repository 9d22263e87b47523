//! The segmentation network.
//!
//! Data flow for a cloud of N points with 8 features each:
//!
//! 1. Point embedding: two dense layers, then two EdgeConv blocks whose
//!    neighbor graphs are rebuilt in the current feature space, giving the
//!    local feature h_pe (N x d_e).
//! 2. Encoder: n_layers multi-head self-attention blocks with residual
//!    connections and layer normalization; the per-layer outputs are
//!    concatenated and fused by one dense layer into h_p (N x d_p).
//! 3. Global feature: h_g = [category embedding, column max of h_p,
//!    column mean of h_p], appended to every row to form h_a.
//! 4. Heads: two dense stacks mapping h_a to 33-way tooth-class logits
//!    and 2-way tooth/gingiva logits.
//!
//! `forward_train` records everything on an autodiff tape. `forward_infer`
//! runs the same math without a tape, with attention evaluated in query
//! blocks so full-resolution clouds do not materialize N x N intermediates
//! all at once.

use std::collections::HashMap;

use ndarray::{concatenate, s, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::autograd::{r, softmax_rows_value, Real, Tape, Var};
use super::knn::knn_indices;
use crate::geometry::FEATURE_DIM;

/// Negative-side slope shared by every nonlinearity in the network.
pub const LEAKY_SLOPE: f64 = 0.2;
/// Layer-normalization variance epsilon.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network config: {0}")]
    BadConfig(String),
    #[error("feature matrix must have {expected} columns, got {got}")]
    BadFeatureDim { expected: usize, got: usize },
    #[error("cloud has {n} points but EdgeConv with k_nn = {k} needs at least {} points", k + 1)]
    TooFewPoints { n: usize, k: usize },
    #[error("category vector must be one-hot")]
    BadCategory,
}

/// Architecture hyperparameters. Widths are configurable; the class counts
/// are fixed by the label scheme (33 tooth classes, 2 aux classes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Point-embedding width (output of the embedding stage).
    pub d_e: usize,
    /// Encoder output width.
    pub d_p: usize,
    /// Category-embedding width.
    pub d_v: usize,
    /// Neighbors per point in EdgeConv.
    pub k_nn: usize,
    /// Attention heads; must divide d_e.
    pub n_heads: usize,
    /// Attention layers.
    pub n_layers: usize,
    /// Main head classes (fixed at 33).
    pub n_classes: usize,
    /// Aux head classes (fixed at 2).
    pub n_aux: usize,
    /// Dropout probability in the heads (training only).
    pub dropout: f64,
    /// Hidden widths of both head MLPs.
    pub head_hidden: (usize, usize),
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            d_e: 128,
            d_p: 256,
            d_v: 64,
            k_nn: 20,
            n_heads: 4,
            n_layers: 4,
            n_classes: crate::classes::NUM_CLASSES,
            n_aux: 2,
            dropout: 0.1,
            head_hidden: (256, 128),
        }
    }
}

impl NetworkConfig {
    /// Desk-scale preset small enough for CPU training loops in tests.
    pub fn tiny() -> Self {
        NetworkConfig {
            d_e: 32,
            d_p: 48,
            d_v: 16,
            k_nn: 8,
            n_heads: 4,
            n_layers: 4,
            dropout: 0.0,
            head_hidden: (48, 32),
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |msg: String| Err(NetworkError::BadConfig(msg));
        if self.n_classes != crate::classes::NUM_CLASSES {
            return bad(format!("n_classes must be 33, got {}", self.n_classes));
        }
        if self.n_aux != 2 {
            return bad(format!("n_aux must be 2, got {}", self.n_aux));
        }
        for (name, v) in [
            ("d_e", self.d_e),
            ("d_p", self.d_p),
            ("d_v", self.d_v),
            ("k_nn", self.k_nn),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("head_hidden.0", self.head_hidden.0),
            ("head_hidden.1", self.head_hidden.1),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.d_e % self.n_heads != 0 {
            return bad(format!(
                "n_heads = {} must divide d_e = {}",
                self.n_heads, self.d_e
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Width of the global feature h_g.
    pub fn d_g(&self) -> usize {
        self.d_v + 2 * self.d_p
    }

    /// Width of the per-point head input h_a.
    pub fn d_a(&self) -> usize {
        self.d_p + self.d_g()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ParamKind {
    /// Dense weight, initialized U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Weight,
    /// Bias row, initialized to zero.
    Bias,
    /// Layer-norm gain, initialized to one.
    Gain,
}

/// (name, rows, cols, kind) for every tensor, in architecture order.
fn tensor_specs(cfg: &NetworkConfig) -> Vec<(String, usize, usize, ParamKind)> {
    use ParamKind::*;
    let mut specs: Vec<(String, usize, usize, ParamKind)> = Vec::new();
    let dense = |name: &str, rows: usize, cols: usize, specs: &mut Vec<_>| {
        specs.push((format!("{name}.w"), rows, cols, Weight));
        specs.push((format!("{name}.b"), 1, cols, Bias));
    };
    let ln = |name: &str, cols: usize, specs: &mut Vec<_>| {
        specs.push((format!("{name}.ln_g"), 1, cols, Gain));
        specs.push((format!("{name}.ln_b"), 1, cols, Bias));
    };

    dense("embed.lin1", FEATURE_DIM, cfg.d_e, &mut specs);
    dense("embed.lin2", cfg.d_e, cfg.d_e, &mut specs);
    for ec in ["embed.ec1", "embed.ec2"] {
        dense(ec, 2 * cfg.d_e, cfg.d_e, &mut specs);
        ln(ec, cfg.d_e, &mut specs);
    }
    for l in 0..cfg.n_layers {
        for proj in ["wq", "wk", "wv", "wo"] {
            specs.push((format!("attn{l}.{proj}"), cfg.d_e, cfg.d_e, Weight));
        }
        ln(&format!("attn{l}"), cfg.d_e, &mut specs);
    }
    dense("fuse", cfg.n_layers * cfg.d_e, cfg.d_p, &mut specs);
    dense("cat", 2, cfg.d_v, &mut specs);
    let (h1, h2) = cfg.head_hidden;
    for (head, out) in [("seg", cfg.n_classes), ("aux", cfg.n_aux)] {
        dense(&format!("{head}.l1"), cfg.d_a(), h1, &mut specs);
        dense(&format!("{head}.l2"), h1, h2, &mut specs);
        dense(&format!("{head}.l3"), h2, out, &mut specs);
    }
    specs
}

/// Named parameter tensors in fixed architecture order.
#[derive(Debug, Clone)]
pub struct ParamSet<F: Real> {
    names: Vec<String>,
    tensors: Vec<Array2<F>>,
    index: HashMap<String, usize>,
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Array2<F>) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.tensors[i] = tensor;
        } else {
            self.index.insert(name.clone(), self.tensors.len());
            self.names.push(name);
            self.tensors.push(tensor);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<F>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<F>> {
        self.index.get(name).copied().map(|i| &mut self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<F>)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.tensors.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<F>)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.tensors.iter_mut())
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

impl<F: Real> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// FNV-1a, used to derive a per-tensor initialization stream from the
/// master seed so init is independent of tensor insertion order.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Tape handles for one training forward pass.
pub struct TrainForward {
    /// N x 33 main-head logits.
    pub seg_logits: Var,
    /// N x 2 aux-head logits.
    pub aux_logits: Var,
    /// One tape leaf per parameter, aligned with `ParamSet` order.
    pub param_vars: Vec<Var>,
}

/// Value ranges observed during an inference forward pass.
#[derive(Debug, Clone, Copy)]
pub struct InferDiagnostics {
    /// Min/max over all attention rows of the row's weight sum.
    pub attn_row_sum: (f64, f64),
}

impl Default for InferDiagnostics {
    fn default() -> Self {
        InferDiagnostics {
            attn_row_sum: (f64::INFINITY, f64::NEG_INFINITY),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network<F: Real> {
    config: NetworkConfig,
    params: ParamSet<F>,
}

impl<F: Real> Network<F> {
    /// Fresh network with fan-in uniform initialization derived from `seed`.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, rows, cols, kind) in tensor_specs(&config) {
            let tensor = match kind {
                ParamKind::Weight => {
                    let bound = 1.0 / (rows as f64).sqrt();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&name));
                    Array2::from_shape_fn((rows, cols), |_| {
                        r::<F>(rng.random_range(-bound..bound))
                    })
                }
                ParamKind::Bias => Array2::zeros((rows, cols)),
                ParamKind::Gain => Array2::ones((rows, cols)),
            };
            params.insert(name, tensor);
        }
        Ok(Network { config, params })
    }

    /// Wrap existing tensors, checking shapes against the config.
    pub fn from_params(config: NetworkConfig, params: ParamSet<F>) -> Result<Self, NetworkError> {
        config.validate()?;
        let specs = tensor_specs(&config);
        if specs.len() != params.len() {
            return Err(NetworkError::BadConfig(format!(
                "expected {} tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (name, rows, cols, _) in &specs {
            match params.get(name) {
                Some(t) if t.dim() == (*rows, *cols) => {}
                Some(t) => {
                    return Err(NetworkError::BadConfig(format!(
                        "tensor {name} has shape {:?}, expected ({rows}, {cols})",
                        t.dim()
                    )))
                }
                None => {
                    return Err(NetworkError::BadConfig(format!("missing tensor {name}")))
                }
            }
        }
        Ok(Network { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    fn check_input(&self, features: &Array2<F>) -> Result<(), NetworkError> {
        if features.ncols() != FEATURE_DIM {
            return Err(NetworkError::BadFeatureDim {
                expected: FEATURE_DIM,
                got: features.ncols(),
            });
        }
        let n = features.nrows();
        if n < self.config.k_nn + 1 {
            return Err(NetworkError::TooFewPoints {
                n,
                k: self.config.k_nn,
            });
        }
        Ok(())
    }

    fn check_category(category: [F; 2]) -> Result<(), NetworkError> {
        let (a, b) = (category[0], category[1]);
        let one_hot = (a == F::one() && b == F::zero()) || (a == F::zero() && b == F::one());
        if one_hot {
            Ok(())
        } else {
            Err(NetworkError::BadCategory)
        }
    }

    /// Tape-recorded forward pass. `dropout_rng` enables head dropout;
    /// pass `None` for evaluation-mode behavior.
    pub fn forward_train(
        &self,
        tape: &Tape<F>,
        features: &Array2<F>,
        category: [F; 2],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<TrainForward, NetworkError> {
        self.check_input(features)?;
        Self::check_category(category)?;
        let cfg = &self.config;
        let n = features.nrows();
        let alpha = r::<F>(LEAKY_SLOPE);
        let eps = r::<F>(LN_EPS);

        // Bind every parameter as a tape leaf.
        let param_vars: Vec<Var> = self
            .params
            .iter()
            .map(|(_, t)| tape.input(t.clone()))
            .collect();
        let by_name: HashMap<&str, Var> = self
            .params
            .iter()
            .map(|(n, _)| n)
            .zip(param_vars.iter().copied())
            .collect();
        let p = |name: &str| -> Var { *by_name.get(name).expect("tensor exists") };

        let x_in = tape.input(features.clone());

        // Point embedding: dense, dense, EdgeConv, EdgeConv.
        let mut h = tape.leaky_relu(
            tape.linear(x_in, p("embed.lin1.w"), p("embed.lin1.b")),
            alpha,
        );
        h = tape.leaky_relu(
            tape.linear(h, p("embed.lin2.w"), p("embed.lin2.b")),
            alpha,
        );
        for ec in ["embed.ec1", "embed.ec2"] {
            let neighbors = knn_indices(&tape.value(h), cfg.k_nn);
            let edges = tape.edge_features(h, neighbors, cfg.k_nn);
            let hidden = tape.leaky_relu(
                tape.linear(edges, p(&format!("{ec}.w")), p(&format!("{ec}.b"))),
                alpha,
            );
            let pooled = tape.group_max(hidden, cfg.k_nn);
            h = tape.layer_norm(
                pooled,
                p(&format!("{ec}.ln_g")),
                p(&format!("{ec}.ln_b")),
                eps,
            );
        }

        // Self-attention encoder; keep every layer's output for the fuse.
        let d_h = cfg.d_e / cfg.n_heads;
        let scale = r::<F>(1.0 / (d_h as f64).sqrt());
        let mut layer_outputs = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let q = tape.matmul(h, p(&format!("attn{l}.wq")));
            let k = tape.matmul(h, p(&format!("attn{l}.wk")));
            let v = tape.matmul(h, p(&format!("attn{l}.wv")));
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for head in 0..cfg.n_heads {
                let qh = tape.slice_cols(q, head * d_h, d_h);
                let kh = tape.slice_cols(k, head * d_h, d_h);
                let vh = tape.slice_cols(v, head * d_h, d_h);
                let scores = tape.scale(tape.matmul_nt(qh, kh), scale);
                let weights = tape.softmax_rows(scores);
                heads.push(tape.matmul(weights, vh));
            }
            let merged = heads
                .into_iter()
                .reduce(|a, b| tape.concat_cols(a, b))
                .expect("n_heads >= 1");
            let o = tape.matmul(merged, p(&format!("attn{l}.wo")));
            h = tape.layer_norm(
                tape.add(h, o),
                p(&format!("attn{l}.ln_g")),
                p(&format!("attn{l}.ln_b")),
                eps,
            );
            layer_outputs.push(h);
        }
        let stacked = layer_outputs
            .into_iter()
            .reduce(|a, b| tape.concat_cols(a, b))
            .expect("n_layers >= 1");
        let h_p = tape.linear(stacked, p("fuse.w"), p("fuse.b"));

        // Global feature and per-point head input.
        let v_row = tape.input(Array2::from_shape_vec((1, 2), category.to_vec()).unwrap());
        let cat_embed = tape.linear(v_row, p("cat.w"), p("cat.b"));
        let pooled_max = tape.col_max(h_p);
        let pooled_mean = tape.col_mean(h_p);
        let h_g = tape.concat_cols(tape.concat_cols(cat_embed, pooled_max), pooled_mean);
        let h_a = tape.concat_cols(h_p, tape.broadcast_rows(h_g, n));

        // Heads with optional dropout after each hidden layer. Mask draw
        // order is fixed: seg.l1, seg.l2, aux.l1, aux.l2.
        let mut dropout_mask = |tape: &Tape<F>, x: Var| -> Var {
            let Some(rng) = dropout_rng.as_deref_mut() else {
                return x;
            };
            if cfg.dropout == 0.0 {
                return x;
            }
            let keep = 1.0 - cfg.dropout;
            let shape = tape.shape(x);
            let mask = Array2::from_shape_fn(shape, |_| {
                if rng.random::<f64>() < cfg.dropout {
                    F::zero()
                } else {
                    r::<F>(1.0 / keep)
                }
            });
            tape.mul_mask(x, mask)
        };

        let head = |tape: &Tape<F>, name: &str, masks: &mut dyn FnMut(&Tape<F>, Var) -> Var| {
            let z1 = tape.leaky_relu(
                tape.linear(h_a, p(&format!("{name}.l1.w")), p(&format!("{name}.l1.b"))),
                alpha,
            );
            let z1 = masks(tape, z1);
            let z2 = tape.leaky_relu(
                tape.linear(z1, p(&format!("{name}.l2.w")), p(&format!("{name}.l2.b"))),
                alpha,
            );
            let z2 = masks(tape, z2);
            tape.linear(z2, p(&format!("{name}.l3.w")), p(&format!("{name}.l3.b")))
        };
        let seg_logits = head(tape, "seg", &mut dropout_mask);
        let aux_logits = head(tape, "aux", &mut dropout_mask);

        Ok(TrainForward {
            seg_logits,
            aux_logits,
            param_vars,
        })
    }

    /// Tape-free forward pass returning (seg logits N x 33, aux logits
    /// N x 2). Identical math to `forward_train` without dropout;
    /// attention runs in query blocks to bound memory.
    pub fn forward_infer(
        &self,
        features: &Array2<F>,
        category: [F; 2],
    ) -> Result<(Array2<F>, Array2<F>), NetworkError> {
        self.forward_infer_diag(features, category, None)
    }

    pub fn forward_infer_diag(
        &self,
        features: &Array2<F>,
        category: [F; 2],
        mut diag: Option<&mut InferDiagnostics>,
    ) -> Result<(Array2<F>, Array2<F>), NetworkError> {
        self.check_input(features)?;
        Self::check_category(category)?;
        let cfg = &self.config;
        let n = features.nrows();
        let alpha = r::<F>(LEAKY_SLOPE);
        let p = |name: &str| -> &Array2<F> { self.params.get(name).expect("tensor exists") };

        let dense = |x: &Array2<F>, name: &str| -> Array2<F> {
            x.dot(p(&format!("{name}.w"))) + p(&format!("{name}.b"))
        };
        let leaky = |mut x: Array2<F>| -> Array2<F> {
            x.mapv_inplace(|v| if v > F::zero() { v } else { alpha * v });
            x
        };

        // Point embedding.
        let mut h = leaky(dense(features, "embed.lin1"));
        h = leaky(dense(&h, "embed.lin2"));
        for ec in ["embed.ec1", "embed.ec2"] {
            h = self.edge_conv_infer(&h, ec);
        }

        // Attention encoder.
        let d_h = cfg.d_e / cfg.n_heads;
        let scale = r::<F>(1.0 / (d_h as f64).sqrt());
        let mut layer_outputs: Vec<Array2<F>> = Vec::with_capacity(cfg.n_layers);
        const QBLOCK: usize = 512;
        for l in 0..cfg.n_layers {
            let q = h.dot(p(&format!("attn{l}.wq")));
            let k = h.dot(p(&format!("attn{l}.wk")));
            let v = h.dot(p(&format!("attn{l}.wv")));
            let mut merged = Array2::zeros((n, cfg.d_e));
            for head in 0..cfg.n_heads {
                let cols = s![.., head * d_h..(head + 1) * d_h];
                let qh = q.slice(cols);
                let kh = k.slice(cols);
                let vh = v.slice(cols);
                for start in (0..n).step_by(QBLOCK) {
                    let end = (start + QBLOCK).min(n);
                    let mut scores = qh.slice(s![start..end, ..]).dot(&kh.t());
                    scores.mapv_inplace(|x| x * scale);
                    let weights = softmax_rows_value(&scores);
                    if let Some(d) = diag.as_deref_mut() {
                        for row in weights.rows() {
                            let sum = row.sum().to_f64().unwrap();
                            d.attn_row_sum.0 = d.attn_row_sum.0.min(sum);
                            d.attn_row_sum.1 = d.attn_row_sum.1.max(sum);
                        }
                    }
                    let out = weights.dot(&vh);
                    merged
                        .slice_mut(s![start..end, head * d_h..(head + 1) * d_h])
                        .assign(&out);
                }
            }
            let o = merged.dot(p(&format!("attn{l}.wo")));
            h = layer_norm_value(
                &(&h + &o),
                p(&format!("attn{l}.ln_g")),
                p(&format!("attn{l}.ln_b")),
            );
            layer_outputs.push(h.clone());
        }
        let views: Vec<_> = layer_outputs.iter().map(|a| a.view()).collect();
        let stacked = concatenate(Axis(1), &views).expect("same row counts");
        let h_p = dense(&stacked, "fuse");

        // Global feature appended to every row.
        let v_row = Array2::from_shape_vec((1, 2), category.to_vec()).unwrap();
        let cat_embed = dense(&v_row, "cat");
        let pooled_max = h_p.fold_axis(Axis(0), F::neg_infinity(), |a, &b| a.max(b));
        let pooled_mean = h_p.sum_axis(Axis(0)) / r::<F>(n as f64);
        let d_a = cfg.d_a();
        let mut h_a = Array2::zeros((n, d_a));
        h_a.slice_mut(s![.., ..cfg.d_p]).assign(&h_p);
        let mut h_g: Vec<F> = Vec::with_capacity(cfg.d_g());
        h_g.extend(cat_embed.row(0).iter().copied());
        h_g.extend(pooled_max.iter().copied());
        h_g.extend(pooled_mean.iter().copied());
        for mut row in h_a.slice_mut(s![.., cfg.d_p..]).rows_mut() {
            for (slot, &v) in row.iter_mut().zip(&h_g) {
                *slot = v;
            }
        }

        let head = |name: &str| -> Array2<F> {
            let z1 = leaky(dense(&h_a, &format!("{name}.l1")));
            let z2 = leaky(dense(&z1, &format!("{name}.l2")));
            dense(&z2, &format!("{name}.l3"))
        };
        Ok((head("seg"), head("aux")))
    }

    fn edge_conv_infer(&self, h: &Array2<F>, ec: &str) -> Array2<F> {
        let cfg = &self.config;
        let (n, d) = h.dim();
        let k = cfg.k_nn;
        let alpha = r::<F>(LEAKY_SLOPE);
        let w = self.params.get(&format!("{ec}.w")).unwrap();
        let b = self.params.get(&format!("{ec}.b")).unwrap();
        let neighbors = knn_indices(h, k);

        // Process points in blocks: edges for a block are (block*k, 2d).
        const PBLOCK: usize = 1024;
        let mut out = Array2::zeros((n, cfg.d_e));
        for start in (0..n).step_by(PBLOCK) {
            let end = (start + PBLOCK).min(n);
            let rows = end - start;
            let mut edges = Array2::zeros((rows * k, 2 * d));
            for (bi, i) in (start..end).enumerate() {
                for m in 0..k {
                    let j = neighbors[i * k + m] as usize;
                    for c in 0..d {
                        edges[[bi * k + m, c]] = h[[i, c]];
                        edges[[bi * k + m, d + c]] = h[[j, c]] - h[[i, c]];
                    }
                }
            }
            let mut hidden = edges.dot(w) + b;
            hidden.mapv_inplace(|v| if v > F::zero() { v } else { alpha * v });
            for bi in 0..rows {
                let mut row = out.row_mut(start + bi);
                for c in 0..cfg.d_e {
                    let mut best = hidden[[bi * k, c]];
                    for m in 1..k {
                        best = best.max(hidden[[bi * k + m, c]]);
                    }
                    row[c] = best;
                }
            }
        }
        layer_norm_value(
            &out,
            self.params.get(&format!("{ec}.ln_g")).unwrap(),
            self.params.get(&format!("{ec}.ln_b")).unwrap(),
        )
    }
}

/// Value-only layer norm shared by the inference path.
fn layer_norm_value<F: Real>(x: &Array2<F>, gain: &Array2<F>, bias: &Array2<F>) -> Array2<F> {
    let (n, m) = x.dim();
    let minv = F::one() / r::<F>(m as f64);
    let eps = r::<F>(LN_EPS);
    let mut y = Array2::zeros((n, m));
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() * minv;
        let var = row.fold(F::zero(), |a, &v| a + (v - mean) * (v - mean)) * minv;
        let inv_std = F::one() / (var + eps).sqrt();
        for c in 0..m {
            y[[i, c]] = (x[[i, c]] - mean) * inv_std * gain[[0, c]] + bias[[0, c]];
        }
    }
    y
}
