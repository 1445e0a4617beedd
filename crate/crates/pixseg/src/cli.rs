//! Command-line driver. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::data::{generate_corpus, ShapeClass};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::model::checkpoint;
use crate::train::plot::{column_series, render_svg};
use crate::train::{
    evaluate_split, parse_loss_list, run_compare, summary_table, train, CompareSpec, LossSpec,
    Protocol, RunLog, TrainConfig,
};

#[derive(Parser)]
#[command(name = "pixseg", version, about = "Pixel-level metric learning for image co-segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic shape corpus (train and val splits)
    Gen {
        /// Output directory for images, masks and manifests
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Training pairs to generate
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        /// Validation pairs to generate
        #[arg(long, default_value_t = 50)]
        val_pairs: usize,
        /// Square image size in pixels
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Comma-separated shape classes
        #[arg(long, default_value = "disc,square,triangle")]
        classes: String,
    },
    /// Train a model on a generated corpus
    Train {
        /// Corpus directory (holds manifest_train.tsv / manifest_val.tsv)
        #[arg(long)]
        data: PathBuf,
        /// Output directory for config, run log and checkpoint
        #[arg(long)]
        out: PathBuf,
        /// key=value config file; flags below override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Single loss spec, e.g. "dice" or "focal+ist"
        #[arg(long)]
        losses: Option<String>,
        #[arg(long)]
        epochs: Option<u32>,
        /// Requested triples per class
        #[arg(long)]
        k: Option<usize>,
        /// Hinge margin m
        #[arg(long)]
        margin: Option<f64>,
        /// Initial trade-off coefficient lambda0
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Evaluate a checkpoint on a corpus split
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
    },
    /// Run the finite-difference gradient-check suite
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train a loss-ablation grid and summarize epochs-to-threshold
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated loss specs
        #[arg(long, default_value = "dice,dice+ist")]
        losses: String,
        /// Comma-separated run seeds
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        /// Learning-rate protocol: paper, equal or both
        #[arg(long, default_value = "equal")]
        protocol: String,
        /// Validation Jaccard threshold for the summary
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Render run-log CSVs as an SVG line plot
    Plot {
        /// Output SVG path
        #[arg(long)]
        out: PathBuf,
        /// Run-log column to plot
        #[arg(long, default_value = "val_jaccard")]
        column: String,
        /// Run-log CSV files
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn base_config(config: Option<&Path>) -> Result<TrainConfig> {
    let base = TrainConfig::desk_preset();
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            base.apply_text(&text)
        }
        None => Ok(base),
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_overrides(
    mut config: TrainConfig,
    seed: Option<u64>,
    epochs: Option<u32>,
    k: Option<usize>,
    margin: Option<f64>,
    lambda: Option<f64>,
    losses: Option<&str>,
) -> Result<TrainConfig> {
    if let Some(v) = seed {
        config.seed = v;
    }
    if let Some(v) = epochs {
        config.epochs = v;
    }
    if let Some(v) = k {
        config.loss.k = v;
    }
    if let Some(v) = margin {
        config.loss.margin_m = v;
    }
    if let Some(v) = lambda {
        config.loss.lambda0 = v;
    }
    if let Some(spec) = losses {
        if spec.contains(',') {
            return Err(Error::invalid(
                "train takes a single loss spec; use `compare` for a grid",
            ));
        }
        let spec = LossSpec::parse(spec)?;
        config.loss.seg_loss_kind = spec.kind;
        config.loss.use_is_triplet = spec.with_ist;
    }
    config.validate()?;
    Ok(config)
}

fn parse_classes(s: &str) -> Result<Vec<ShapeClass>> {
    s.split(',').map(|c| ShapeClass::parse(c.trim())).collect()
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad seed '{}'", v.trim())))
        })
        .collect()
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen { out, seed, pairs, val_pairs, size, classes } => {
            let classes = parse_classes(&classes)?;
            let train_m = generate_corpus(pairs, &classes, size, seed, &out, "train")?;
            let val_m = generate_corpus(val_pairs, &classes, size, seed, &out, "val")?;
            println!(
                "wrote {} train pairs and {} val pairs to {}",
                train_m.entries.len(),
                val_m.entries.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train { data, out, config, seed, losses, epochs, k, margin, lambda } => {
            let config = apply_overrides(
                base_config(config.as_deref())?,
                seed,
                epochs,
                k,
                margin,
                lambda,
                losses.as_deref(),
            )?;
            let outcome = train(&config, &data, Some(&out))?;
            let last = outcome.log.rows.last().expect("epochs >= 1");
            println!(
                "trained {} epochs; final val jaccard {:.4}, precision {:.4}; outputs in {}",
                outcome.log.rows.len(),
                last.val_jaccard,
                last.val_precision,
                out.display()
            );
            Ok(())
        }
        Command::Eval { data, checkpoint: ckpt, split } => {
            let model = checkpoint::load(&ckpt)?;
            let report = evaluate_split(&model, &data, &split)?;
            println!(
                "split={} images={} precision={:.4} pixel_accuracy={:.4} jaccard={:.4}",
                split, report.images, report.precision, report.pixel_accuracy, report.jaccard
            );
            Ok(())
        }
        Command::Gradcheck { seed } => {
            let reports = gradcheck::run_all(seed)?;
            let mut all_pass = true;
            for r in &reports {
                println!(
                    "{:<18} max rel err {:.3e} (tolerance {:.0e}) {}",
                    r.name,
                    r.max_rel_err,
                    r.tolerance,
                    if r.passed() { "PASS" } else { "FAIL" }
                );
                all_pass &= r.passed();
            }
            if all_pass {
                Ok(())
            } else {
                Err(Error::invalid("gradient check failed"))
            }
        }
        Command::Compare {
            data, out, config, losses, seeds, protocol, threshold, epochs, k, margin, lambda,
        } => {
            let base = apply_overrides(
                base_config(config.as_deref())?,
                None,
                epochs,
                k,
                margin,
                lambda,
                None,
            )?;
            let spec = CompareSpec {
                losses: parse_loss_list(&losses)?,
                seeds: parse_seeds(&seeds)?,
                protocol: Protocol::parse(&protocol)?,
                threshold,
                base,
            };
            let runs = run_compare(&spec, &data, Some(&out))?;
            print!("{}", summary_table(&runs, threshold));
            Ok(())
        }
        Command::Plot { out, column, inputs } => {
            let mut series = Vec::new();
            for path in &inputs {
                let log = RunLog::load(path)?;
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                series.push(column_series(&log, &column, &label)?);
            }
            let svg = render_svg(&series, &column, "epoch", &column)?;
            std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
