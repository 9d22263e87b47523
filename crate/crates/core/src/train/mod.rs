//! Training loop: sampling, augmentation, loss, Adam, checkpoints.
//!
//! Determinism is the organizing principle. Every stochastic choice —
//! epoch shuffling, point sampling, augmentation, dropout — draws from a
//! generator seeded by hashing (master seed, purpose, epoch, sample), so
//! no long-lived RNG threads state through the run. Interrupting after
//! any epoch and resuming from the checkpoint therefore reproduces the
//! uninterrupted run bit for bit, optimizer moments included.

pub mod adam;
pub mod augment;
pub mod synth;

use ndarray::{Array2, Zip};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_features, downsample, FeatureCloud, GeometryError};
use crate::labels::LabelMap;
use crate::loss::{loss_graph, select_hard_points, LossError, LossReport, LossWeights};
use crate::mesh::{FaceAdjacency, TriMesh};
use crate::nn::autograd::Tape;
use crate::nn::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::network::{Network, NetworkConfig, NetworkError, ParamSet};
use adam::{Adam, AdamConfig, AdamError};
use augment::{augment_features, AugmentConfig};
use synth::SyntheticJaw;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Optimizer(#[from] AdamError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("labels cover {labels} faces but the cloud has {rows} rows")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("no training samples")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: u64 },
}

/// Everything a training run needs to be reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Scans per optimizer update (gradients are averaged).
    pub batch_size: usize,
    /// Points sampled from each scan per visit.
    pub n_points: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub seed: u64,
    pub loss: LossWeights,
    pub augment: AugmentConfig,
    pub network: NetworkConfig,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 4,
            n_points: 10_000,
            lr: 1e-3,
            lr_min: 1e-5,
            seed: 7,
            loss: LossWeights::default(),
            augment: AugmentConfig::default(),
            network: NetworkConfig::default(),
            checkpoint_every: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be >= 1".into()));
        }
        if self.n_points <= self.network.k_nn {
            return Err(TrainError::BadConfig(format!(
                "n_points ({}) must exceed k_nn ({})",
                self.n_points, self.network.k_nn
            )));
        }
        if !(self.lr > 0.0) || !(self.lr_min > 0.0) || self.lr_min > self.lr {
            return Err(TrainError::BadConfig(format!(
                "need 0 < lr_min <= lr, got lr = {}, lr_min = {}",
                self.lr, self.lr_min
            )));
        }
        self.loss.validate()?;
        self.network
            .validate()
            .map_err(|e| TrainError::BadConfig(e.to_string()))?;
        Ok(())
    }
}

/// Stateless seed derivation: hash the master seed with a purpose tag
/// and any further coordinates (epoch, sample index, ...). splitmix64
/// finalization keeps nearby inputs uncorrelated.
pub fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = master ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 30;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Purpose tags for [`mix_seed`].
pub mod purpose {
    pub const ORDER: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const EVAL: u64 = 5;
}

/// Cosine decay from `lr` to `lr_min` over `total_steps` updates.
pub fn cosine_lr(lr: f64, lr_min: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return lr_min;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    lr_min + 0.5 * (lr - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// One scan prepared for training: full-resolution features plus labels
/// aligned with the cloud rows.
pub struct TrainSample {
    pub cloud: FeatureCloud,
    pub labels: Vec<u8>,
}

impl TrainSample {
    pub fn new(cloud: FeatureCloud, labels: &LabelMap) -> Result<Self, TrainError> {
        if labels.len() != cloud.n() {
            return Err(TrainError::LabelMismatch {
                labels: labels.len(),
                rows: cloud.n(),
            });
        }
        Ok(TrainSample {
            cloud,
            labels: labels.ids().to_vec(),
        })
    }

    /// Feature extraction for a labeled mesh.
    pub fn from_mesh(mesh: &TriMesh, labels: &LabelMap, jaw: crate::classes::Jaw) -> Result<Self, TrainError> {
        let adj = FaceAdjacency::build(mesh);
        let cloud = build_features(mesh, &adj, jaw);
        Self::new(cloud, labels)
    }

    pub fn from_synth(jaw: &SyntheticJaw) -> Result<Self, TrainError> {
        Self::from_mesh(&jaw.mesh, &jaw.labels, jaw.jaw)
    }
}

/// Per-step record, one JSON object per line in the training log.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub l_seg: f64,
    pub l_geo: f64,
    pub l_aux: f64,
    pub l_total: f64,
}

pub struct Trainer {
    config: TrainConfig,
    network: Network<f32>,
    adam: Adam,
    /// Next epoch to run (also the count of completed epochs).
    epoch: usize,
    /// Completed optimizer updates.
    step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let network = Network::init(config.network.clone(), config.seed)?;
        let adam = Adam::new(AdamConfig::default(), network.params());
        Ok(Trainer {
            config,
            network,
            adam,
            epoch: 0,
            step: 0,
        })
    }

    /// Rebuild the exact training state a checkpoint was written from.
    pub fn resume(ckpt: Checkpoint) -> Result<Self, TrainError> {
        let (network, opt_state, info) = ckpt.into_network()?;
        let config: TrainConfig = serde_json::from_value(
            info.meta
                .get("train")
                .cloned()
                .ok_or_else(|| TrainError::BadConfig("checkpoint has no training config".into()))?,
        )
        .map_err(|e| TrainError::BadConfig(format!("bad training config in checkpoint: {e}")))?;
        config.validate()?;
        let adam = Adam::from_state(AdamConfig::default(), network.params(), &opt_state)?;
        Ok(Trainer {
            config,
            network,
            adam,
            epoch: info.epoch as usize,
            step: info.step,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Snapshot parameters, optimizer moments, and progress counters.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, Array2<f32>)> = self
            .network
            .params()
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        for (name, tensor) in self.adam.state().iter() {
            tensors.push((format!("opt.{name}"), tensor.clone()));
        }
        Checkpoint {
            config: self.network.config().clone(),
            rng_seed: self.config.seed,
            epoch: self.epoch as u64,
            step: self.step,
            meta: serde_json::json!({ "train": self.config }),
            tensors,
        }
    }

    fn steps_per_epoch(&self, samples: usize) -> u64 {
        samples.div_ceil(self.config.batch_size) as u64
    }

    /// Planned optimizer updates for the whole run (drives the schedule).
    pub fn total_steps(&self, samples: usize) -> u64 {
        self.config.epochs as u64 * self.steps_per_epoch(samples)
    }

    /// Run one epoch over `data`, calling `on_step` after every update.
    /// Returns the mean loss over the epoch's steps.
    pub fn train_epoch(
        &mut self,
        data: &[TrainSample],
        mut on_step: impl FnMut(&StepLog),
    ) -> Result<LossReport, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let epoch = self.epoch;
        let total_steps = self.total_steps(data.len());
        let seed = self.config.seed;

        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(
            seed,
            &[purpose::ORDER, epoch as u64],
        )));

        // Reusable gradient accumulator shaped like the parameters.
        let mut accum = ParamSet::new();
        for (name, tensor) in self.network.params().iter() {
            accum.insert(name, Array2::zeros(tensor.dim()));
        }

        let mut epoch_sum = LossReport {
            l_seg: 0.0,
            l_geo: 0.0,
            l_aux: 0.0,
            l_total: 0.0,
        };
        let mut epoch_steps = 0u64;

        for batch in order.chunks(self.config.batch_size) {
            for (_, tensor) in accum.iter_mut() {
                tensor.fill(0.0);
            }
            let mut batch_report = LossReport {
                l_seg: 0.0,
                l_geo: 0.0,
                l_aux: 0.0,
                l_total: 0.0,
            };

            for &j in batch {
                let sample = &data[j];
                let coords = [epoch as u64, j as u64];

                let sub = downsample(
                    &sample.cloud,
                    self.config.n_points,
                    mix_seed(seed, &[purpose::SAMPLE, coords[0], coords[1]]),
                )?;
                let labels: Vec<u8> = sub
                    .source_face()
                    .iter()
                    .map(|&f| sample.labels[f as usize])
                    .collect();

                let mut feats = sub.features().clone();
                if self.config.augment.enabled {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                        seed,
                        &[purpose::AUGMENT, coords[0], coords[1]],
                    ));
                    augment_features(&mut feats, &self.config.augment, &mut rng);
                }
                let feats32 = feats.mapv(|x| x as f32);
                let category = sub.category().map(|c| c as f32);

                let ranking = self.config.loss.ranking_signal.values(&sub);
                let hard = select_hard_points(&ranking, self.config.loss.r)?;

                let tape = Tape::new();
                let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(
                    seed,
                    &[purpose::DROPOUT, coords[0], coords[1]],
                ));
                let fwd = self.network.forward_train(
                    &tape,
                    &feats32,
                    category,
                    Some(&mut dropout_rng),
                )?;
                let graph = loss_graph(
                    &tape,
                    fwd.seg_logits,
                    fwd.aux_logits,
                    &labels,
                    &hard,
                    &self.config.loss,
                )?;
                let report = graph.report(&tape);
                if !report.l_total.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        step: self.step,
                    });
                }
                batch_report.l_seg += report.l_seg;
                batch_report.l_geo += report.l_geo;
                batch_report.l_aux += report.l_aux;
                batch_report.l_total += report.l_total;

                let grads = tape.backward(graph.total);
                for ((_, acc), &var) in accum.iter_mut().zip(&fwd.param_vars) {
                    if let Some(g) = grads.get(var) {
                        Zip::from(acc).and(g).for_each(|a, &g| *a += g);
                    }
                }
            }

            let inv = 1.0 / batch.len() as f32;
            for (_, tensor) in accum.iter_mut() {
                tensor.mapv_inplace(|g| g * inv);
            }
            let lr = cosine_lr(self.config.lr, self.config.lr_min, self.step, total_steps);
            self.step += 1;
            self.adam
                .step(self.network.params_mut(), &accum, lr as f32, self.step)?;

            let inv = 1.0 / batch.len() as f64;
            let log = StepLog {
                epoch,
                step: self.step,
                lr,
                l_seg: batch_report.l_seg * inv,
                l_geo: batch_report.l_geo * inv,
                l_aux: batch_report.l_aux * inv,
                l_total: batch_report.l_total * inv,
            };
            epoch_sum.l_seg += log.l_seg;
            epoch_sum.l_geo += log.l_geo;
            epoch_sum.l_aux += log.l_aux;
            epoch_sum.l_total += log.l_total;
            epoch_steps += 1;
            on_step(&log);
        }

        self.epoch += 1;
        let inv = 1.0 / epoch_steps as f64;
        Ok(LossReport {
            l_seg: epoch_sum.l_seg * inv,
            l_geo: epoch_sum.l_geo * inv,
            l_aux: epoch_sum.l_aux * inv,
            l_total: epoch_sum.l_total * inv,
        })
    }

    /// Run all remaining epochs.
    pub fn run(
        &mut self,
        data: &[TrainSample],
        mut on_step: impl FnMut(&StepLog),
    ) -> Result<LossReport, TrainError> {
        let mut last = LossReport {
            l_seg: f64::NAN,
            l_geo: f64::NAN,
            l_aux: f64::NAN,
            l_total: f64::NAN,
        };
        while !self.finished() {
            last = self.train_epoch(data, &mut on_step)?;
        }
        Ok(last)
    }
}

#[cfg(test)]
mod tests {
    use super::synth::{generate_jaw, SynthConfig};
    use super::*;

    fn tiny_setup(epochs: usize, seed: u64) -> (TrainConfig, Vec<TrainSample>) {
        let synth = SynthConfig {
            nu: 48,
            nv: 16,
            tooth_count: 6,
            tooth_radius: (4.5, 5.5),
            ..SynthConfig::default()
        };
        let data: Vec<TrainSample> = (0..2)
            .map(|i| TrainSample::from_synth(&generate_jaw(&synth, 100 + i).unwrap()).unwrap())
            .collect();
        let config = TrainConfig {
            epochs,
            batch_size: 2,
            n_points: 96,
            seed,
            network: NetworkConfig::tiny(),
            augment: AugmentConfig {
                enabled: false,
                ..AugmentConfig::default()
            },
            ..TrainConfig::default()
        };
        (config, data)
    }

    #[test]
    fn seed_mixing_is_deterministic_and_spread_out() {
        assert_eq!(mix_seed(7, &[1, 2, 3]), mix_seed(7, &[1, 2, 3]));
        let mut seen = std::collections::HashSet::new();
        for purpose in 0..4u64 {
            for epoch in 0..50u64 {
                assert!(seen.insert(mix_seed(7, &[purpose, epoch])));
            }
        }
        assert_ne!(mix_seed(7, &[1, 2]), mix_seed(8, &[1, 2]));
        assert_ne!(mix_seed(7, &[1, 2]), mix_seed(7, &[2, 1]));
    }

    #[test]
    fn cosine_schedule_hits_both_endpoints() {
        let lr = cosine_lr(1e-3, 1e-5, 0, 100);
        assert!((lr - 1e-3).abs() < 1e-12);
        let lr = cosine_lr(1e-3, 1e-5, 100, 100);
        assert!((lr - 1e-5).abs() < 1e-12);
        let mid = cosine_lr(1e-3, 1e-5, 50, 100);
        assert!((mid - (1e-3 + 1e-5) / 2.0).abs() < 1e-9);
        // Monotone non-increasing.
        let mut last = f64::INFINITY;
        for s in 0..=100 {
            let lr = cosine_lr(1e-3, 1e-5, s, 100);
            assert!(lr <= last + 1e-15);
            last = lr;
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr: 1e-6,
            lr_min: 1e-3,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            n_points: 3,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn loss_decreases_on_a_tiny_problem() {
        let (config, data) = tiny_setup(12, 41);
        let mut trainer = Trainer::new(config).unwrap();
        let mut losses = Vec::new();
        trainer
            .run(&data, |log| losses.push(log.l_total))
            .unwrap();
        assert_eq!(losses.len(), 12);
        let early = losses[..3].iter().sum::<f64>() / 3.0;
        let late = losses[losses.len() - 3..].iter().sum::<f64>() / 3.0;
        assert!(
            late < early,
            "no descent: early {early:.4}, late {late:.4}, all {losses:?}"
        );
    }

    #[test]
    fn resume_reproduces_uninterrupted_run_exactly() {
        let (config, data) = tiny_setup(6, 42);

        let mut straight = Trainer::new(config.clone()).unwrap();
        straight.run(&data, |_| {}).unwrap();

        let mut first = Trainer::new(config).unwrap();
        for _ in 0..3 {
            first.train_epoch(&data, |_| {}).unwrap();
        }
        let ckpt = first.to_checkpoint();
        let mut resumed = Trainer::resume(ckpt).unwrap();
        assert_eq!(resumed.epoch(), 3);
        resumed.run(&data, |_| {}).unwrap();

        assert_eq!(straight.step(), resumed.step());
        for ((name_a, a), (name_b, b)) in straight
            .network()
            .params()
            .iter()
            .zip(resumed.network().params().iter())
        {
            assert_eq!(name_a, name_b);
            assert_eq!(a, b, "tensor {name_a} diverged after resume");
        }
    }

    #[test]
    fn epoch_order_depends_on_epoch_and_seed() {
        let mut orders = Vec::new();
        for (seed, epoch) in [(7u64, 0u64), (7, 1), (8, 0)] {
            let mut order: Vec<usize> = (0..32).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(
                seed,
                &[purpose::ORDER, epoch],
            )));
            orders.push(order);
        }
        assert_ne!(orders[0], orders[1]);
        assert_ne!(orders[0], orders[2]);
    }
}
