//! Implementations behind the CLI subcommands.
//!
//! Each function takes its parsed argument struct and returns
//! `Result<(), CliError>`; `main` turns errors into a JSON line on
//! stderr. Machine-readable output goes to stdout, progress to the log.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;
use toothseg::fsio::atomic_write;
use toothseg::geometry::{
    build_features, gaussian_curvature, mean_curvature, point_curvature, point_curvature_knn,
    CurvatureField,
};
use toothseg::infer::{export_colored_obj, export_probs_csv};
use toothseg::labels::LabelMap;
use toothseg::loss::RankingSignal;
use toothseg::mesh::{load_mesh, save_mesh, FaceAdjacency};
use toothseg::metrics::{evaluate, format_table, summarize, GroupStats, ScanEval};
use toothseg::nn::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use toothseg::nn::network::Network;
use toothseg::train::synth::{generate_jaw, SynthConfig};
use toothseg::train::{StepLog, TrainConfig, TrainSample, Trainer};
use toothseg::{segment_mesh, InferOptions, Jaw};

use crate::manifest::{load_dataset, LoadedScan, Manifest, ScanEntry};
use crate::{
    CliError, CompareArgs, CurvatureArgs, EvalArgs, FeaturesArgs, InferArgs, SynthArgs, TrainArgs,
};

/// Optional TOML config file shared by the training-style commands.
/// Unknown tables are rejected so typos fail loudly.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    synth: Option<SynthConfig>,
    train: Option<TrainConfig>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Msg(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Msg(format!("bad config {}: {e}", path.display())))
    }
}

fn parse_jaw(s: &str) -> Result<Jaw, CliError> {
    Jaw::parse(s).ok_or_else(|| {
        CliError::Msg(format!(
            "unknown jaw {s:?}; use maxillary/upper or mandible/lower"
        ))
    })
}

/// `PREFIX` + suffix as a sibling path (`out/scan` + `.labels` ->
/// `out/scan.labels`), creating the parent directory if needed.
fn prefixed(prefix: &Path, suffix: &str) -> Result<PathBuf, CliError> {
    let path = PathBuf::from(format!("{}{suffix}", prefix.display()));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(path)
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), CliError> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------- features

pub fn features(args: FeaturesArgs) -> Result<(), CliError> {
    let jaw = parse_jaw(&args.jaw)?;
    let mesh = load_mesh(&args.mesh)?;
    let adj = FaceAdjacency::build(&mesh);
    let cloud = build_features(&mesh, &adj, jaw);
    let f = cloud.features();
    let rows = (0..cloud.n()).map(|i| {
        let mut row = format!("{}", cloud.source_face()[i]);
        for j in 0..f.ncols() {
            row.push_str(&format!(",{:.9}", f[[i, j]]));
        }
        row.push_str(&format!(
            ",{:.9},{:.9},{:.9}",
            cloud.raw_gaussian()[i],
            cloud.raw_point()[i],
            cloud.raw_mean()[i]
        ));
        row
    });
    write_csv(
        &args.out,
        "face,x,y,z,nx,ny,nz,gaussian_scaled,point_scaled,gaussian_raw,point_raw,mean_raw",
        rows,
    )?;
    log::info!(
        "wrote {} feature rows for {} to {}",
        cloud.n(),
        args.mesh.display(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- curvature

pub fn curvature(args: CurvatureArgs) -> Result<(), CliError> {
    let mesh = load_mesh(&args.mesh)?;
    let field: CurvatureField = match args.kind.as_str() {
        "gaussian" => gaussian_curvature(&mesh),
        "mean" => mean_curvature(&mesh),
        "point" => match args.neighborhood.as_str() {
            "two-hop" => point_curvature(&mesh, &FaceAdjacency::build(&mesh)),
            "knn" => point_curvature_knn(&mesh, args.k),
            other => {
                return Err(CliError::Msg(format!(
                    "unknown neighborhood {other:?}; use two-hop or knn"
                )))
            }
        },
        other => {
            return Err(CliError::Msg(format!(
                "unknown curvature kind {other:?}; use point, gaussian, or mean"
            )))
        }
    };
    write_csv(
        &args.out,
        "face,value",
        field
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{i},{v:.9}")),
    )?;
    log::info!(
        "wrote {} {} curvature values to {}",
        field.values.len(),
        args.kind,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- synth

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Msg("--count must be at least 1".into()));
    }
    let config = ConfigFile::load(args.config.as_deref())?
        .synth
        .unwrap_or_default();
    std::fs::create_dir_all(&args.out)?;

    let mut entries = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let seed = args.seed + i as u64;
        let jaw = generate_jaw(&config, seed)?;
        let name = format!("scan_{i:04}");
        let mesh_file = format!("{name}.obj");
        let label_file = format!("{name}.labels");
        save_mesh(&jaw.mesh, &args.out.join(&mesh_file))?;
        jaw.labels.save(&args.out.join(&label_file))?;
        entries.push(ScanEntry {
            name,
            mesh: mesh_file,
            labels: label_file,
            jaw: jaw.jaw,
            seed: Some(seed),
        });
        log::info!(
            "scan {i:>4}/{}: seed {seed}, {} faces, {:?}",
            args.count,
            jaw.mesh.face_count(),
            jaw.jaw
        );
    }
    Manifest {
        scans: entries,
        synth: Some(config),
    }
    .save(&args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "dataset": args.out,
            "scans": args.count,
            "first_seed": args.seed,
        })
    );
    Ok(())
}

// ---------------------------------------------------------------- train

fn samples_from(scans: &[LoadedScan]) -> Result<Vec<TrainSample>, CliError> {
    scans
        .iter()
        .map(|s| TrainSample::from_mesh(&s.mesh, &s.labels, s.jaw).map_err(CliError::from))
        .collect()
}

/// Drive the trainer to completion, appending one JSON line per
/// optimizer step to `out/train_log.jsonl` and checkpointing on the
/// configured cadence plus a `final.ckpt` at the end.
fn run_training(
    mut trainer: Trainer,
    samples: &[TrainSample],
    out: &Path,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    atomic_write(
        &out.join("config.json"),
        serde_json::to_string_pretty(trainer.config())
            .expect("config serialization cannot fail")
            .as_bytes(),
    )?;
    println!(
        "{}",
        serde_json::to_string(trainer.config()).expect("config serialization cannot fail")
    );

    let log_path = out.join("train_log.jsonl");
    let mut log_file = BufWriter::new(
        File::options()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| CliError::Msg(format!("cannot open {}: {e}", log_path.display())))?,
    );

    let started = Instant::now();
    let every = trainer.config().checkpoint_every;
    while !trainer.finished() {
        let report = trainer.train_epoch(samples, |step: &StepLog| {
            // Buffered; flushed after the epoch.
            let _ = serde_json::to_writer(&mut log_file, step);
            let _ = log_file.write_all(b"\n");
        })?;
        log_file.flush()?;
        let epoch = trainer.epoch(); // completed epochs so far
        log::info!(
            "epoch {epoch:>4}/{}: loss {:.6} (seg {:.6}, geo {:.6}, aux {:.6})",
            trainer.config().epochs,
            report.l_total,
            report.l_seg,
            report.l_geo,
            report.l_aux
        );
        if every > 0 && epoch % every == 0 && !trainer.finished() {
            let path = out.join(format!("checkpoint_epoch{epoch:04}.ckpt"));
            save_checkpoint(&trainer.to_checkpoint(), &path)?;
            log::info!("checkpoint written to {}", path.display());
        }
    }
    let final_path = out.join("final.ckpt");
    save_checkpoint(&trainer.to_checkpoint(), &final_path)?;
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": final_path,
            "epochs": trainer.epoch(),
            "steps": trainer.step(),
            "seconds": started.elapsed().as_secs_f64(),
        })
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let scans = load_dataset(&args.data)?;
    let samples = samples_from(&scans)?;
    log::info!("loaded {} scans from {}", scans.len(), args.data.display());

    let trainer = if let Some(ckpt_path) = &args.resume {
        let ckpt = load_checkpoint(ckpt_path)?;
        let trainer = Trainer::resume(ckpt)?;
        log::info!(
            "resumed from {} at epoch {}, step {}",
            ckpt_path.display(),
            trainer.epoch(),
            trainer.step()
        );
        trainer
    } else {
        let mut config = ConfigFile::load(args.config.as_deref())?
            .train
            .unwrap_or_default();
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        Trainer::new(config)?
    };
    run_training(trainer, &samples, &args.out)
}

// ---------------------------------------------------------------- infer

fn load_network(path: &Path) -> Result<Network<f32>, CliError> {
    let ckpt: Checkpoint = load_checkpoint(path)?;
    let (network, _opt, _header) = ckpt.into_network()?;
    Ok(network)
}

pub fn infer(args: InferArgs) -> Result<(), CliError> {
    let jaw = parse_jaw(&args.jaw)?;
    let network = load_network(&args.checkpoint)?;
    let mesh = load_mesh(&args.mesh)?;
    let opts = InferOptions {
        n_points: args.n_points,
        seed: args.seed,
        with_probs: args.probs,
    };
    let started = Instant::now();
    let result = segment_mesh(&network, &mesh, jaw, &opts)?;
    let seconds = started.elapsed().as_secs_f64();

    let labels = LabelMap::from_ids(result.face_labels.clone())?;
    labels.save(&prefixed(&args.out_prefix, ".labels")?)?;
    export_colored_obj(&mesh, &result.face_labels, &prefixed(&args.out_prefix, "_colored.obj")?)?;
    if let Some(probs) = &result.probs {
        export_probs_csv(probs, &prefixed(&args.out_prefix, "_probs.csv")?)?;
    }

    let hist = labels.histogram();
    let classes_present: Vec<usize> =
        (0..hist.len()).filter(|&c| hist[c] > 0).collect();
    let tooth_faces = result.aux_labels.iter().filter(|&&a| a == 1).count();
    let summary = serde_json::json!({
        "mesh": args.mesh,
        "faces": mesh.face_count(),
        "rounds": result.rounds,
        "duplicates": result.duplicates,
        "seed": result.seed,
        "n_points": result.n_points,
        "classes_present": classes_present,
        "tooth_face_fraction": tooth_faces as f64 / mesh.face_count() as f64,
        "seconds": seconds,
    });
    atomic_write(
        &prefixed(&args.out_prefix, "_result.json")?,
        serde_json::to_string_pretty(&summary)
            .expect("summary serialization cannot fail")
            .as_bytes(),
    )?;
    println!("{summary}");
    Ok(())
}

// ---------------------------------------------------------------- eval

/// Fraction of faces where the tooth/gingiva decision matches.
fn aux_accuracy(aux_pred: &[u8], truth: &LabelMap) -> f64 {
    let truth_aux = truth.aux_ids();
    let agree = aux_pred
        .iter()
        .zip(&truth_aux)
        .filter(|(p, t)| p == t)
        .count();
    agree as f64 / truth_aux.len().max(1) as f64
}

fn eval_scans(
    network: &Network<f32>,
    scans: &[LoadedScan],
    opts: &InferOptions,
) -> Result<(Vec<ScanEval>, f64), CliError> {
    let mut evals = Vec::with_capacity(scans.len());
    let mut aux_sum = 0.0;
    for scan in scans {
        let result = segment_mesh(network, &scan.mesh, scan.jaw, opts)?;
        let report = evaluate(&result.face_labels, scan.labels.ids())?;
        let aux = aux_accuracy(&result.aux_labels, &scan.labels);
        aux_sum += aux;
        println!(
            "{}",
            serde_json::json!({
                "scan": scan.name,
                "jaw": scan.jaw,
                "accuracy": report.accuracy,
                "mean_iou": report.mean_iou,
                "mean_dsc": report.mean_dsc,
                "aux_accuracy": aux,
            })
        );
        evals.push(ScanEval {
            name: scan.name.clone(),
            jaw: scan.jaw,
            report,
        });
    }
    Ok((evals, aux_sum / scans.len().max(1) as f64))
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    match (&args.pred, &args.checkpoint) {
        (Some(pred_path), None) => {
            let truth_path = args.truth.as_ref().expect("clap enforces --truth");
            let pred = LabelMap::load(pred_path)?;
            let truth = LabelMap::load(truth_path)?;
            truth.expect_len(pred.len())?;
            let report = evaluate(pred.ids(), truth.ids())?;
            let text = serde_json::to_string_pretty(&report)
                .expect("report serialization cannot fail");
            println!("{text}");
            if let Some(out) = &args.out {
                atomic_write(out, text.as_bytes())?;
            }
            Ok(())
        }
        (None, Some(ckpt_path)) => {
            let data = args.data.as_ref().expect("clap enforces --data");
            let network = load_network(ckpt_path)?;
            let scans = load_dataset(data)?;
            let opts = InferOptions {
                n_points: args.n_points,
                seed: args.seed,
                with_probs: false,
            };
            let (evals, aux_mean) = eval_scans(&network, &scans, &opts)?;
            let groups = summarize(&evals);
            println!("{}", format_table(&groups));
            println!(
                "{}",
                serde_json::json!({ "aux_accuracy_mean": aux_mean })
            );
            if let Some(out) = &args.out {
                let groups_json: Vec<serde_json::Value> = groups
                    .iter()
                    .map(|(name, stats)| {
                        serde_json::json!({ "group": name, "stats": stats })
                    })
                    .collect();
                atomic_write(
                    out,
                    serde_json::to_string_pretty(&serde_json::json!({
                        "scans": evals,
                        "groups": groups_json,
                        "aux_accuracy_mean": aux_mean,
                    }))
                    .expect("report serialization cannot fail")
                    .as_bytes(),
                )?;
            }
            Ok(())
        }
        _ => Err(CliError::Msg(
            "pass either --pred with --truth, or --checkpoint with --data".into(),
        )),
    }
}

// ---------------------------------------------------------------- compare

/// Train one arm per curvature ranking signal with an otherwise
/// identical recipe, then score each arm on the same scans.
pub fn compare_curvatures(args: CompareArgs) -> Result<(), CliError> {
    let scans = load_dataset(&args.data)?;
    let samples = samples_from(&scans)?;

    let mut base = ConfigFile::load(args.config.as_deref())?
        .train
        .unwrap_or_default();
    base.epochs = args.epochs;
    base.seed = args.seed;
    base.checkpoint_every = 0;

    let arms = [RankingSignal::Point, RankingSignal::Gaussian, RankingSignal::Mean];
    let mut rows: Vec<(RankingSignal, GroupStats, f64, f64)> = Vec::new();
    for signal in arms {
        let mut config = base.clone();
        config.loss.ranking_signal = signal;
        let mut trainer = Trainer::new(config)?;
        let started = Instant::now();
        let report = trainer.run(&samples, |_| {})?;
        let seconds = started.elapsed().as_secs_f64();
        log::info!(
            "arm {signal}: final loss {:.6} after {} epochs in {seconds:.1}s",
            report.l_total,
            args.epochs
        );

        let opts = InferOptions {
            n_points: trainer.config().n_points,
            seed: 0,
            with_probs: false,
        };
        let mut stats = GroupStats {
            scans: 0,
            accuracy: 0.0,
            mean_iou: 0.0,
            mean_dsc: 0.0,
        };
        for scan in &scans {
            let result = segment_mesh(trainer.network(), &scan.mesh, scan.jaw, &opts)?;
            let r = evaluate(&result.face_labels, scan.labels.ids())?;
            stats.scans += 1;
            stats.accuracy += r.accuracy;
            stats.mean_iou += r.mean_iou;
            stats.mean_dsc += r.mean_dsc;
        }
        let inv = 1.0 / stats.scans.max(1) as f64;
        stats.accuracy *= inv;
        stats.mean_iou *= inv;
        stats.mean_dsc *= inv;
        rows.push((signal, stats, report.l_total, seconds));
    }

    println!(
        "{:<10} {:>10} {:>10} {:>10} {:>12} {:>9}",
        "signal", "accuracy", "mIoU", "DSC", "final loss", "seconds"
    );
    for (signal, stats, loss, seconds) in &rows {
        println!(
            "{:<10} {:>9.2}% {:>10.4} {:>10.4} {:>12.6} {:>9.1}",
            signal.to_string(),
            stats.accuracy * 100.0,
            stats.mean_iou,
            stats.mean_dsc,
            loss,
            seconds
        );
    }

    if let Some(out) = &args.out {
        let arms_json: Vec<serde_json::Value> = rows
            .iter()
            .map(|(signal, stats, loss, seconds)| {
                serde_json::json!({
                    "signal": signal.to_string(),
                    "stats": stats,
                    "final_loss": loss,
                    "seconds": seconds,
                })
            })
            .collect();
        atomic_write(
            out,
            serde_json::to_string_pretty(&serde_json::json!({
                "epochs": args.epochs,
                "seed": args.seed,
                "scans": scans.len(),
                "arms": arms_json,
            }))
            .expect("report serialization cannot fail")
            .as_bytes(),
        )?;
    }
    Ok(())
}
