//! Training objectives.
//!
//! Three components: cross-entropy over the 33-way head (L_seg), over the
//! 2-way tooth/gingiva head (L_aux), and a curvature-guided focal term
//! (L_geo) restricted to the hard-point set S(r): the ceil(r*N) points
//! with the highest ranking curvature. L_seg/L_aux are per-point means;
//! L_geo is a sum over S(r) with the focal modulation (1-p)^gamma, and
//! the total is L_seg + omega_geo * L_geo + omega_aux * L_aux.
//!
//! Every loss exists in two forms that must agree: a plain-value form on
//! probability matrices (used by tests and metrics-style evaluation) and
//! a tape form on logits (used by training to get gradients).

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::FeatureCloud;
use crate::nn::autograd::{r, Real, Tape, Var};

/// Probabilities are clamped to at least this before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("empty input")]
    EmptyInput,
    #[error("{what}: expected {expected} rows, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("label {label} at row {row} out of range (classes: {classes})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("invalid loss weights: {0}")]
    BadWeights(String),
}

/// Which per-point scalar ranks points into S(r).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RankingSignal {
    /// Normal-deviation point curvature (the default).
    #[default]
    Point,
    /// Angle-deficit Gaussian curvature.
    Gaussian,
    /// Cotangent-Laplacian mean curvature.
    Mean,
    /// Constant zero ranking: S(r) degenerates to the first ceil(r*N)
    /// rows by index (ablation arm).
    None,
}

impl RankingSignal {
    pub fn parse(s: &str) -> Option<RankingSignal> {
        match s {
            "point" => Some(RankingSignal::Point),
            "gaussian" => Some(RankingSignal::Gaussian),
            "mean" => Some(RankingSignal::Mean),
            "none" => Some(RankingSignal::None),
            _ => None,
        }
    }

    /// Raw (unnormalized) ranking values for each row of the cloud.
    pub fn values(&self, cloud: &FeatureCloud) -> Vec<f64> {
        match self {
            RankingSignal::Point => cloud.raw_point().to_vec(),
            RankingSignal::Gaussian => cloud.raw_gaussian().to_vec(),
            RankingSignal::Mean => cloud.raw_mean().to_vec(),
            RankingSignal::None => vec![0.0; cloud.n()],
        }
    }
}

impl std::fmt::Display for RankingSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RankingSignal::Point => "point",
            RankingSignal::Gaussian => "gaussian",
            RankingSignal::Mean => "mean",
            RankingSignal::None => "none",
        };
        f.write_str(s)
    }
}

/// Weights and knobs of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub omega_geo: f64,
    pub omega_aux: f64,
    pub gamma: f64,
    /// Hard-point ratio in (0, 1].
    pub r: f64,
    pub ranking_signal: RankingSignal,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            omega_geo: 0.001,
            omega_aux: 1.0,
            gamma: 2.0,
            r: 0.4,
            ranking_signal: RankingSignal::Point,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(LossError::BadWeights(format!(
                "r must be in (0, 1], got {}",
                self.r
            )));
        }
        if self.gamma < 0.0 {
            return Err(LossError::BadWeights(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if self.omega_geo < 0.0 || self.omega_aux < 0.0 {
            return Err(LossError::BadWeights("weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// The selected hard points and the ranking values that chose them.
#[derive(Debug, Clone)]
pub struct HardPointSet {
    /// Row indices, ordered by descending ranking value (ties ascending
    /// by index).
    pub indices: Vec<usize>,
    /// Ranking value of each selected row, aligned with `indices`.
    pub curvatures: Vec<f64>,
}

/// Number of hard points for a cloud of `n`: ceil(r*n), at least 1, at
/// most n. The small bias keeps exact products like 0.4 * 10000 from
/// landing an ulp above an integer and ceiling one too high.
pub fn hard_point_count(n: usize, r: f64) -> usize {
    (((r * n as f64) - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Top ceil(r*N) rows by ranking value, ties broken by ascending index.
pub fn select_hard_points(curvatures: &[f64], r: f64) -> Result<HardPointSet, LossError> {
    if curvatures.is_empty() {
        return Err(LossError::EmptyInput);
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(LossError::BadWeights(format!(
            "r must be in (0, 1], got {r}"
        )));
    }
    let n = curvatures.len();
    let count = hard_point_count(n, r);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        curvatures[b]
            .total_cmp(&curvatures[a])
            .then(a.cmp(&b))
    });
    order.truncate(count);
    let values = order.iter().map(|&i| curvatures[i]).collect();
    Ok(HardPointSet {
        indices: order,
        curvatures: values,
    })
}

/// Components of one loss evaluation, as logged per training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_seg: f64,
    pub l_geo: f64,
    pub l_aux: f64,
    pub l_total: f64,
}

/// Weighted total from already-computed components.
pub fn total_loss(l_seg: f64, l_geo: f64, l_aux: f64, w: &LossWeights) -> LossReport {
    LossReport {
        l_seg,
        l_geo,
        l_aux,
        l_total: l_seg + w.omega_geo * l_geo + w.omega_aux * l_aux,
    }
}

fn check_labels(labels: &[u8], classes: usize, rows: usize) -> Result<(), LossError> {
    if labels.len() != rows {
        return Err(LossError::LengthMismatch {
            what: "labels",
            expected: rows,
            got: labels.len(),
        });
    }
    for (row, &label) in labels.iter().enumerate() {
        if label as usize >= classes {
            return Err(LossError::LabelOutOfRange {
                row,
                label: label as usize,
                classes,
            });
        }
    }
    Ok(())
}

/// Mean negative log-likelihood over all rows of a row-stochastic matrix.
pub fn nll_mean(probs: &Array2<f64>, labels: &[u8]) -> Result<f64, LossError> {
    let (n, classes) = probs.dim();
    if n == 0 {
        return Err(LossError::EmptyInput);
    }
    check_labels(labels, classes, n)?;
    let mut sum = 0.0;
    for (row, &label) in labels.iter().enumerate() {
        let p = probs[[row, label as usize]].max(PROB_FLOOR);
        sum -= p.ln();
    }
    Ok(sum / n as f64)
}

/// Mean cross-entropy of the 33-way head.
pub fn seg_loss(probs: &Array2<f64>, labels: &[u8]) -> Result<f64, LossError> {
    nll_mean(probs, labels)
}

/// Mean cross-entropy of the tooth/gingiva head (labels already binary).
pub fn aux_loss(probs: &Array2<f64>, labels: &[u8]) -> Result<f64, LossError> {
    nll_mean(probs, labels)
}

/// Focal cross-entropy summed over the hard points:
/// sum over i in S(r) of -(1 - p_true)^gamma * ln(p_true).
pub fn geo_loss(
    probs: &Array2<f64>,
    labels: &[u8],
    hard: &HardPointSet,
    gamma: f64,
) -> Result<f64, LossError> {
    let (n, classes) = probs.dim();
    if n == 0 {
        return Err(LossError::EmptyInput);
    }
    check_labels(labels, classes, n)?;
    let mut sum = 0.0;
    for &i in &hard.indices {
        if i >= n {
            return Err(LossError::LengthMismatch {
                what: "hard-point indices",
                expected: n,
                got: i + 1,
            });
        }
        let p = probs[[i, labels[i] as usize]].max(PROB_FLOOR);
        sum -= (1.0 - p).powf(gamma) * p.ln();
    }
    Ok(sum)
}

/// Tape handles for the loss components of one sample.
pub struct LossGraph {
    pub seg: Var,
    pub geo: Var,
    pub aux: Var,
    pub total: Var,
}

/// One-hot row mask for gathering the true-class column per row.
fn one_hot_mask<F: Real>(labels: &[u8], classes: usize) -> Array2<F> {
    let mut mask = Array2::zeros((labels.len(), classes));
    for (row, &label) in labels.iter().enumerate() {
        mask[[row, label as usize]] = F::one();
    }
    mask
}

/// Clamped per-row log p_true from logits: log-softmax, gather by label,
/// floor at ln(PROB_FLOOR).
fn log_p_true<F: Real>(tape: &Tape<F>, logits: Var, labels: &[u8], classes: usize) -> Var {
    let log_probs = tape.log_softmax_rows(logits);
    let masked = tape.mul_mask(log_probs, one_hot_mask(labels, classes));
    let ln_p = tape.row_sums(masked);
    tape.clamp_min(ln_p, r::<F>(PROB_FLOOR.ln()))
}

/// Build the full differentiable loss from head logits.
///
/// `labels` are the 33-way targets; aux targets are derived as
/// (label != 0). The hard-point set must come from the same cloud.
pub fn loss_graph<F: Real>(
    tape: &Tape<F>,
    seg_logits: Var,
    aux_logits: Var,
    labels: &[u8],
    hard: &HardPointSet,
    w: &LossWeights,
) -> Result<LossGraph, LossError> {
    w.validate()?;
    let (n, classes) = tape.shape(seg_logits);
    if n == 0 {
        return Err(LossError::EmptyInput);
    }
    check_labels(labels, classes, n)?;
    for &i in &hard.indices {
        if i >= n {
            return Err(LossError::LengthMismatch {
                what: "hard-point indices",
                expected: n,
                got: i + 1,
            });
        }
    }
    let aux_labels: Vec<u8> = labels.iter().map(|&l| (l != 0) as u8).collect();

    let ln_p_seg = log_p_true(tape, seg_logits, labels, classes);
    let seg = tape.scale(tape.sum_all(ln_p_seg), r::<F>(-1.0 / n as f64));

    let ln_p_aux = log_p_true(tape, aux_logits, &aux_labels, 2);
    let aux = tape.scale(tape.sum_all(ln_p_aux), r::<F>(-1.0 / n as f64));

    // Focal sum over the hard rows.
    let ln_p_hard = tape.gather_rows(ln_p_seg, hard.indices.clone());
    let p_hard = tape.exp(ln_p_hard);
    let focal = tape.powf(tape.affine(p_hard, r::<F>(-1.0), F::one()), r::<F>(w.gamma));
    let geo = tape.scale(tape.sum_all(tape.mul(focal, ln_p_hard)), r::<F>(-1.0));

    let total = tape.add(
        seg,
        tape.add(
            tape.scale(geo, r::<F>(w.omega_geo)),
            tape.scale(aux, r::<F>(w.omega_aux)),
        ),
    );
    Ok(LossGraph {
        seg,
        geo,
        aux,
        total,
    })
}

impl LossGraph {
    pub fn report<F: Real>(&self, tape: &Tape<F>) -> LossReport {
        let f = |v: Var| tape.scalar(v).to_f64().unwrap();
        LossReport {
            l_seg: f(self.seg),
            l_geo: f(self.geo),
            l_aux: f(self.aux),
            l_total: f(self.total),
        }
    }
}
