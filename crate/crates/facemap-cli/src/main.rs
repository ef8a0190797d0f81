//! `facemap` command-line tool: train, grow, evaluate, and query face
//! recognition models built from frequency-domain features.
//!
//! Exit codes: 0 on success, 2 for bad inputs (missing datasets, corrupt
//! images, invalid flags or config keys), 3 for operating-system I/O
//! failures such as an unwritable output directory.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "facemap",
    version,
    about = "Face recognition from cosine-transform features with a pooled-covariance decision rule"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by train and evaluate. Every flag is optional; unset flags
/// fall back to the config file and then to built-in defaults.
#[derive(Args)]
struct CommonOpts {
    /// Flat `key = value` config file; command-line flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root: one subdirectory of images per class
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for models and reports
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the per-class train/test shuffle
    #[arg(long)]
    seed: Option<u64>,
    /// Coefficients kept per channel (values above 99 trigger a warning)
    #[arg(long)]
    k: Option<usize>,
    /// Color handling: gray | ycbcr
    #[arg(long)]
    color: Option<String>,
    /// Coefficient selection: sort | mask
    #[arg(long)]
    select: Option<String>,
    /// Decision rule: map | pca | lda
    #[arg(long)]
    classifier: Option<String>,
    /// Canonical image size as WxH, for example 128x128
    #[arg(long)]
    size: Option<String>,
    /// Training images per class; the rest of each class becomes probes
    #[arg(long)]
    train_per_class: Option<usize>,
    /// Subspace dimension for the baselines (0 = automatic)
    #[arg(long)]
    m: Option<usize>,
    /// Trace-scaled ridge added to the pooled covariance
    #[arg(long)]
    ridge_scale: Option<f64>,
    /// Histogram-equalize the chroma planes too, not only luma
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    equalize_chroma: Option<bool>,
}

#[derive(Subcommand)]
enum Command {
    /// Index a dataset, fit the pooled-covariance model, save it to
    /// <out>/model.mapf
    Train {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Enroll one new class into a saved model without touching the
    /// images the model was trained on
    AddClass {
        /// Model file produced by train
        #[arg(long)]
        model: PathBuf,
        /// Directory holding the new class's images
        #[arg(long)]
        class_dir: PathBuf,
        /// Class label; defaults to the directory name
        #[arg(long)]
        label: Option<String>,
    },
    /// Score every test probe and write cms.csv, roc.csv, decisions.csv,
    /// and summary.txt to the output directory
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// Score a saved model instead of training one in this run
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rank the enrolled classes for one probe image
    Recognize {
        /// Model file produced by train
        #[arg(long)]
        model: PathBuf,
        /// Probe image (PGM, PPM, or PNG)
        #[arg(long)]
        image: PathBuf,
        /// How many candidates to print, best first
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
}

/// Folds the optional config file and the explicit flags into one config,
/// flags winning key by key.
fn resolve(common: &CommonOpts) -> Result<RunConfig, facemap::Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(data) = &common.data {
        cfg.data = Some(data.clone());
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(k) = common.k {
        cfg.k = k;
    }
    if let Some(color) = &common.color {
        cfg.apply("color", color)?;
    }
    if let Some(select) = &common.select {
        cfg.apply("select", select)?;
    }
    if let Some(classifier) = &common.classifier {
        cfg.apply("classifier", classifier)?;
    }
    if let Some(size) = &common.size {
        let (w, h) = parse_size(size)?;
        cfg.width = w;
        cfg.height = h;
    }
    if let Some(train_per_class) = common.train_per_class {
        cfg.train_per_class = train_per_class;
    }
    if let Some(m) = common.m {
        cfg.m = m;
    }
    if let Some(ridge_scale) = common.ridge_scale {
        cfg.ridge_scale = ridge_scale;
    }
    if let Some(equalize_chroma) = common.equalize_chroma {
        cfg.equalize_chroma = equalize_chroma;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_size(s: &str) -> Result<(usize, usize), facemap::Error> {
    let bad = || facemap::Error::Config(format!("size must look like 128x128, got: {s}"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    Ok((
        w.trim().parse().map_err(|_| bad())?,
        h.trim().parse().map_err(|_| bad())?,
    ))
}

fn run(cli: Cli) -> Result<(), facemap::Error> {
    match &cli.command {
        Command::Train { common } => commands::cmd_train(&resolve(common)?),
        Command::AddClass {
            model,
            class_dir,
            label,
        } => commands::cmd_add_class(model, class_dir, label.as_deref()),
        Command::Evaluate { common, model } => {
            commands::cmd_evaluate(&resolve(common)?, model.as_deref())
        }
        Command::Recognize { model, image, top } => commands::cmd_recognize(model, image, *top),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use facemap::pipeline::ClassifierKind;
    use facemap::preprocess::ColorMode;
    use facemap::SelectionMode;
    use std::io::Write as _;

    fn opts() -> CommonOpts {
        CommonOpts {
            config: None,
            data: None,
            out: None,
            seed: None,
            k: None,
            color: None,
            select: None,
            classifier: None,
            size: None,
            train_per_class: None,
            m: None,
            ridge_scale: None,
            equalize_chroma: None,
        }
    }

    #[test]
    fn flags_override_config_file_key_by_key() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, "k = 8\nseed = 3\ncolor = gray\nselect = mask\n").unwrap();
        let mut common = opts();
        common.config = Some(file.path().to_path_buf());
        common.k = Some(16);
        common.classifier = Some("lda".into());
        common.size = Some("24x18".into());
        common.equalize_chroma = Some(true);
        let cfg = resolve(&common).unwrap();
        assert_eq!(cfg.k, 16, "flag beats file");
        assert_eq!(cfg.seed, 3, "file beats default");
        assert_eq!(cfg.color, ColorMode::Gray);
        assert_eq!(cfg.select, SelectionMode::FixedMask);
        assert_eq!(cfg.classifier, ClassifierKind::Lda);
        assert_eq!((cfg.width, cfg.height), (24, 18));
        assert!(cfg.equalize_chroma);
    }

    #[test]
    fn invalid_flag_values_are_config_errors() {
        let mut common = opts();
        common.color = Some("sepia".into());
        assert!(resolve(&common).is_err());

        let mut common = opts();
        common.size = Some("128".into());
        assert!(resolve(&common).is_err());

        let mut common = opts();
        common.k = Some(0);
        assert!(resolve(&common).is_err());
    }

    #[test]
    fn size_parser_accepts_wxh_only() {
        assert_eq!(parse_size("128x128").unwrap(), (128, 128));
        assert_eq!(parse_size("92x112").unwrap(), (92, 112));
        assert!(parse_size("128").is_err());
        assert!(parse_size("ax b").is_err());
        assert!(parse_size("12x").is_err());
    }

    #[test]
    fn cli_parses_all_subcommands() {
        Cli::try_parse_from(["facemap", "train", "--data", "d", "--k", "9"]).unwrap();
        Cli::try_parse_from([
            "facemap",
            "add-class",
            "--model",
            "m.mapf",
            "--class-dir",
            "faces/zoe",
        ])
        .unwrap();
        Cli::try_parse_from(["facemap", "evaluate", "--data", "d", "--classifier", "pca"]).unwrap();
        Cli::try_parse_from([
            "facemap",
            "recognize",
            "--model",
            "m.mapf",
            "--image",
            "probe.pgm",
            "--top",
            "3",
        ])
        .unwrap();
        assert!(Cli::try_parse_from(["facemap", "paint"]).is_err());
    }
}
