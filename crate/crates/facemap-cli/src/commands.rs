//! The four subcommands. Each one maps library building blocks onto files
//! and console output; no recognition logic lives here.

use std::path::Path;
use std::time::Instant;

use facemap::classify::ClassSamples;
use facemap::eval::{write_cms_csv, write_roc_csv, write_text_atomic, EvalError};
use facemap::ingest::{list_class_images, scan_dataset, SplitSpec};
use facemap::model_io::{load_model, save_model};
use facemap::pipeline::{
    evaluate_pipeline, features_for_path, train_pipeline, write_decisions_csv, ClassifierKind,
    TrainedClassifier, TrainedPipeline,
};
use facemap::Error;

use crate::config::RunConfig;

/// Writes one line to stdout. A closed pipe ends the process quietly, the
/// way line-oriented tools behave under `head`; any other stdout failure
/// is a real I/O error.
fn say(line: std::fmt::Arguments) -> Result<(), Error> {
    use std::io::Write as _;
    let mut out = std::io::stdout();
    match out.write_fmt(line).and_then(|()| out.write_all(b"\n")) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(Error::Eval(EvalError::Io {
            path: std::path::PathBuf::from("stdout"),
            source: e,
        })),
    }
}

fn require_data(cfg: &RunConfig) -> Result<&Path, Error> {
    cfg.data.as_deref().ok_or_else(|| {
        Error::Config("a dataset directory is required (--data or the data config key)".into())
    })
}

/// Output-directory creation failures count as I/O errors, like any other
/// failed write under the output root.
fn create_out_dir(out: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(out).map_err(|e| {
        Error::Eval(EvalError::Io {
            path: out.to_path_buf(),
            source: e,
        })
    })
}

fn assemble_loaded(path: &Path) -> Result<TrainedPipeline, Error> {
    let (model, params) = load_model(path)?;
    let masks = model.masks().map(<[Vec<usize>]>::to_vec);
    Ok(TrainedPipeline {
        params,
        masks,
        classifier: TrainedClassifier::Map(model),
    })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), Error> {
    if cfg.classifier != ClassifierKind::Map {
        return Err(Error::Config(format!(
            "only the pooled-covariance classifier can be saved to a model file; \
             run evaluate with --classifier {} instead",
            cfg.classifier.as_str()
        )));
    }
    let data = require_data(cfg)?;
    create_out_dir(&cfg.out)?;
    let started = Instant::now();
    let index = scan_dataset(data, SplitSpec::TrainCount(cfg.train_per_class), cfg.seed)?;
    log::info!(
        "dataset: {} classes, {} training images, content hash {}",
        index.classes.len(),
        index.total_train(),
        index.hash()
    );
    for class in &index.classes {
        log::info!(
            "class {}: {} train / {} test",
            class.label,
            class.train.len(),
            class.test.len()
        );
    }
    let params = cfg.params();
    let pipeline = train_pipeline(&index, &params, ClassifierKind::Map, cfg.m)?;
    let TrainedClassifier::Map(model) = &pipeline.classifier else {
        unreachable!("train_pipeline honors the requested classifier kind");
    };
    for &channel in model.channels() {
        let epsilon = model
            .epsilon(channel)
            .expect("model reports epsilon for its own channels");
        log::info!("channel {channel}: k = {}, ridge epsilon = {epsilon:e}", cfg.k);
    }
    let model_path = cfg.out.join("model.mapf");
    save_model(model, &params, &model_path)?;
    log::info!(
        "trained {} classes in {:.2}s",
        model.class_count(),
        started.elapsed().as_secs_f64()
    );
    say(format_args!("model written to {}", model_path.display()))?;
    Ok(())
}

pub fn cmd_add_class(model_path: &Path, class_dir: &Path, label: Option<&str>) -> Result<(), Error> {
    let started = Instant::now();
    let (mut model, params) = load_model(model_path)?;
    let label = match label {
        Some(l) => l.to_owned(),
        None => class_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| {
                Error::Config(format!(
                    "cannot derive a label from {}; pass --label",
                    class_dir.display()
                ))
            })?,
    };
    let files = list_class_images(class_dir)?;
    let masks = model.masks().map(<[Vec<usize>]>::to_vec);
    let samples = files
        .iter()
        .map(|p| features_for_path(p, &params, masks.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    model.add_class(&ClassSamples {
        label: label.clone(),
        samples,
    })?;
    save_model(&model, &params, model_path)?;
    log::info!(
        "enrolled {} images as class {label} in {:.2}s without re-reading existing classes",
        files.len(),
        started.elapsed().as_secs_f64()
    );
    say(format_args!("model now holds {} classes", model.class_count()))?;
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, model_path: Option<&Path>) -> Result<(), Error> {
    let data = require_data(cfg)?;
    create_out_dir(&cfg.out)?;
    let index = scan_dataset(data, SplitSpec::TrainCount(cfg.train_per_class), cfg.seed)?;
    log::info!(
        "dataset: {} classes, {} training images, content hash {}",
        index.classes.len(),
        index.total_train(),
        index.hash()
    );
    let (pipeline, effective, train_seconds) = match model_path {
        Some(path) => {
            if cfg.classifier != ClassifierKind::Map {
                return Err(Error::Config(
                    "a saved model always scores with the pooled-covariance rule; \
                     omit --model to fit pca or lda in this run"
                        .into(),
                ));
            }
            let pipeline = assemble_loaded(path)?;
            // The summary must echo what actually ran, which for a loaded
            // model is the file's feature geometry, not the flags.
            let mut effective = cfg.clone();
            effective.width = pipeline.params.width;
            effective.height = pipeline.params.height;
            effective.color = pipeline.params.color_mode;
            effective.k = pipeline.params.k;
            effective.select = pipeline.params.selection_mode;
            effective.equalize_chroma = pipeline.params.equalize_chroma;
            effective.ridge_scale = pipeline.params.ridge_scale;
            (pipeline, effective, 0.0)
        }
        None => {
            let train_started = Instant::now();
            let pipeline = train_pipeline(&index, &cfg.params(), cfg.classifier, cfg.m)?;
            (pipeline, cfg.clone(), train_started.elapsed().as_secs_f64())
        }
    };

    let outcome = evaluate_pipeline(&pipeline, &index)?;
    write_cms_csv(&cfg.out.join("cms.csv"), &outcome.report.cms)?;
    write_roc_csv(&cfg.out.join("roc.csv"), &outcome.report.roc)?;
    write_decisions_csv(&cfg.out.join("decisions.csv"), &outcome.decisions)?;

    let mut summary = String::new();
    summary.push_str(&format!("rank1 = {}\n", outcome.report.rank1));
    match outcome.report.eer {
        Some(eer) => summary.push_str(&format!("eer = {eer}\n")),
        None => summary.push_str("eer = undefined (fewer than two classes)\n"),
    }
    summary.push_str(&format!("classes = {}\n", index.classes.len()));
    summary.push_str(&format!("probes = {}\n", outcome.decisions.len()));
    summary.push_str(&format!("dataset_hash = {}\n", index.hash()));
    summary.push_str(&format!(
        "model_source = {}\n",
        model_path.map_or_else(|| "trained in this run".into(), |p| p.display().to_string())
    ));
    // Timing lives here and in the log, never in the CSVs, so report files
    // stay byte-identical across runs of the same config and dataset.
    summary.push_str(&format!("train_seconds = {train_seconds:.3}\n"));
    summary.push_str(&format!("probe_seconds = {:.3}\n", outcome.probe_seconds));
    for line in effective.to_file_string().lines() {
        summary.push_str("config.");
        summary.push_str(line);
        summary.push('\n');
    }
    write_text_atomic(&cfg.out.join("summary.txt"), &summary).map_err(Error::from)?;

    log::info!(
        "evaluation took {train_seconds:.2}s training + {:.2}s probing",
        outcome.probe_seconds
    );
    say(format_args!("rank1 = {:.4}", outcome.report.rank1))?;
    if let Some(eer) = outcome.report.eer {
        say(format_args!("eer = {eer:.4}"))?;
    }
    say(format_args!("reports written to {}", cfg.out.display()))?;
    Ok(())
}

pub fn cmd_recognize(model_path: &Path, image: &Path, top: usize) -> Result<(), Error> {
    let pipeline = assemble_loaded(model_path)?;
    let started = Instant::now();
    let scores = pipeline.scores_for_path(image)?;
    let labels = pipeline.labels();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    log::info!(
        "scored {} classes in {:.4}s",
        labels.len(),
        started.elapsed().as_secs_f64()
    );
    for &i in order.iter().take(top.max(1)) {
        say(format_args!("{}\t{}", labels[i], scores[i]))?;
    }
    Ok(())
}
