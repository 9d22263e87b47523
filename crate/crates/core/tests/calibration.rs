//! Manual experiments for sizing the end-to-end training recipes used
//! by the slower integration tests. Ignored by default; run with
//! `cargo test -p toothseg --test calibration -- --ignored --nocapture`.

use std::time::Instant;

use toothseg::infer::{segment_mesh, InferOptions};
use toothseg::metrics::evaluate;
use toothseg::train::augment::AugmentConfig;
use toothseg::train::synth::{generate_jaw, SynthConfig, SyntheticJaw};
use toothseg::train::{TrainConfig, TrainSample, Trainer};
use toothseg::{Network, NetworkConfig};

fn dataset(synth: &SynthConfig, seeds: std::ops::Range<u64>) -> (Vec<SyntheticJaw>, Vec<TrainSample>) {
    let jaws: Vec<SyntheticJaw> = seeds.map(|s| generate_jaw(synth, s).unwrap()).collect();
    let samples = jaws
        .iter()
        .map(|j| TrainSample::from_synth(j).unwrap())
        .collect();
    (jaws, samples)
}

fn full_mesh_accuracy(
    network: &Network<f32>,
    jaws: &[SyntheticJaw],
    n_points: usize,
) -> (f64, f64, f64, f64) {
    let opts = InferOptions {
        n_points,
        seed: 999,
        with_probs: false,
    };
    let (mut acc, mut miou, mut aux) = (0.0, 0.0, 0.0);
    let mut min_acc = f64::INFINITY;
    for jaw in jaws {
        let result = segment_mesh(network, &jaw.mesh, jaw.jaw, &opts).unwrap();
        let report = evaluate(&result.face_labels, jaw.labels.ids()).unwrap();
        let aux_truth = jaw.labels.aux_ids();
        let aux_report = evaluate(&result.aux_labels, &aux_truth).unwrap();
        acc += report.accuracy;
        min_acc = min_acc.min(report.accuracy);
        miou += report.mean_iou;
        aux += aux_report.accuracy;
    }
    let k = jaws.len() as f64;
    (acc / k, miou / k, aux / k, min_acc)
}

#[test]
#[ignore]
fn overfit_probe() {
    let synth = SynthConfig {
        nu: 44,
        nv: 12,
        tooth_count: 6,
        tooth_radius: (4.5, 5.5),
        ..SynthConfig::default()
    };
    let (jaws, samples) = dataset(&synth, 0..8);
    println!(
        "dataset: {} jaws, {} faces each",
        jaws.len(),
        jaws[0].mesh.face_count()
    );

    let network = NetworkConfig {
        d_e: 48,
        d_p: 64,
        head_hidden: (64, 48),
        ..NetworkConfig::tiny()
    };
    let config = TrainConfig {
        epochs: 300,
        batch_size: 2,
        n_points: 544,
        lr: 1.5e-3,
        lr_min: 3e-5,
        seed: 7,
        network,
        loss: toothseg::LossWeights {
            omega_geo: 0.01,
            ..toothseg::LossWeights::default()
        },
        augment: AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config).unwrap();

    let start = Instant::now();
    for epoch in 0..300 {
        let report = trainer.train_epoch(&samples, |_| {}).unwrap();
        if (epoch + 1) % 20 == 0 {
            let (acc, miou, aux, min_acc) = full_mesh_accuracy(trainer.network(), &jaws, 544);
            println!(
                "epoch {:>3}  loss {:.4}  acc {:.4} (min {:.4})  miou {:.4}  aux {:.4}  [{:?}]",
                epoch + 1,
                report.l_total,
                acc,
                min_acc,
                miou,
                aux,
                start.elapsed()
            );
        }
    }
}

#[test]
#[ignore]
fn generalization_probe() {
    let synth = SynthConfig {
        nu: 44,
        nv: 12,
        tooth_count: 6,
        tooth_radius: (4.5, 5.5),
        missing_tooth_prob: 0.0,
        ..SynthConfig::default()
    };
    let (train_jaws, samples) = dataset(&synth, 0..64);
    let (test_jaws, _) = dataset(&synth, 1000..1016);
    println!("train {} test {}", train_jaws.len(), test_jaws.len());

    let network = NetworkConfig {
        d_e: 48,
        d_p: 64,
        head_hidden: (64, 48),
        ..NetworkConfig::tiny()
    };
    let config = TrainConfig {
        epochs: 60,
        batch_size: 2,
        n_points: 544,
        lr: 1.5e-3,
        lr_min: 3e-5,
        seed: 7,
        network,
        loss: toothseg::LossWeights {
            omega_geo: 0.01,
            ..toothseg::LossWeights::default()
        },
        augment: AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config).unwrap();

    let start = Instant::now();
    for epoch in 0..60 {
        let report = trainer.train_epoch(&samples, |_| {}).unwrap();
        if (epoch + 1) % 5 == 0 {
            let (acc, miou, aux, min_acc) =
                full_mesh_accuracy(trainer.network(), &test_jaws, 544);
            println!(
                "epoch {:>3}  loss {:.4}  held-out acc {:.4} (min {:.4})  miou {:.4}  aux {:.4}  [{:?}]",
                epoch + 1,
                report.l_total,
                acc,
                min_acc,
                miou,
                aux,
                start.elapsed()
            );
        }
    }
}
