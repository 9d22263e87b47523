//! Library-level end-to-end test: generate data, train briefly, run
//! full-resolution inference, and score the result — the same flow the
//! CLI wires together, but through the public API.

use toothseg::infer::{segment_mesh, InferOptions};
use toothseg::loss::LossWeights;
use toothseg::metrics::{evaluate, summarize, ScanEval};
use toothseg::nn::{load_checkpoint, save_checkpoint};
use toothseg::train::augment::AugmentConfig;
use toothseg::train::synth::{generate_jaw, SynthConfig};
use toothseg::train::{TrainConfig, TrainSample, Trainer};
use toothseg::NetworkConfig;

#[test]
fn pipeline_trains_infers_and_scores() {
    // Coarse jaws keep one epoch under half a second.
    let synth = SynthConfig {
        nu: 44,
        nv: 12,
        tooth_count: 6,
        tooth_radius: (4.5, 5.5),
        ..SynthConfig::default()
    };
    let jaws: Vec<_> = (0..4).map(|s| generate_jaw(&synth, s).unwrap()).collect();
    let samples: Vec<_> = jaws
        .iter()
        .map(|j| TrainSample::from_synth(j).unwrap())
        .collect();

    let config = TrainConfig {
        epochs: 40,
        batch_size: 2,
        n_points: 544,
        lr: 1.5e-3,
        lr_min: 3e-5,
        seed: 7,
        network: NetworkConfig {
            d_e: 48,
            d_p: 64,
            head_hidden: (64, 48),
            ..NetworkConfig::tiny()
        },
        loss: LossWeights {
            omega_geo: 0.01,
            ..LossWeights::default()
        },
        augment: AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config).unwrap();

    let mut first_loss = None;
    let mut last_loss = f64::NAN;
    while !trainer.finished() {
        let report = trainer.train_epoch(&samples, |_| {}).unwrap();
        first_loss.get_or_insert(report.l_total);
        last_loss = report.l_total;
    }
    let first_loss = first_loss.unwrap();
    assert!(
        last_loss < 0.5 * first_loss,
        "loss should at least halve: {first_loss:.4} -> {last_loss:.4}"
    );

    // Full-resolution inference on every training jaw beats the
    // all-gingiva baseline comfortably after 40 epochs.
    let opts = InferOptions {
        n_points: 544,
        seed: 0,
        with_probs: true,
    };
    let mut evals = Vec::new();
    for (i, jaw) in jaws.iter().enumerate() {
        let result = segment_mesh(trainer.network(), &jaw.mesh, jaw.jaw, &opts).unwrap();
        assert_eq!(result.face_labels.len(), jaw.mesh.face_count());
        let probs = result.probs.as_ref().expect("requested probabilities");
        assert_eq!(probs.nrows(), jaw.mesh.face_count());
        let report = evaluate(&result.face_labels, jaw.labels.ids()).unwrap();
        evals.push(ScanEval {
            name: format!("jaw{i}"),
            jaw: jaw.jaw,
            report,
        });
    }
    let groups = summarize(&evals);
    let (_, all) = groups.last().expect("aggregate row");
    assert!(
        all.accuracy > 0.70,
        "train accuracy {:.3} should clear the ~0.65 background baseline",
        all.accuracy
    );

    // A checkpoint that goes through disk drives identical predictions.
    let dir = std::env::temp_dir().join(format!("toothseg-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("net.ckpt");
    save_checkpoint(&trainer.to_checkpoint(), &path).unwrap();
    let (network, _, _) = load_checkpoint(&path).unwrap().into_network().unwrap();
    std::fs::remove_dir_all(&dir).ok();

    let before = segment_mesh(trainer.network(), &jaws[0].mesh, jaws[0].jaw, &opts).unwrap();
    let after = segment_mesh(&network, &jaws[0].mesh, jaws[0].jaw, &opts).unwrap();
    assert_eq!(before.face_labels, after.face_labels);
    assert_eq!(before.aux_labels, after.aux_labels);
}
