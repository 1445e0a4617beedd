//! Loss-ablation grid: train every requested loss configuration over a set
//! of seeds, write one run log per cell, and summarize epochs-to-threshold.
//!
//! Two learning-rate protocols are supported. "paper" uses the published
//! defaults (0.001 plain, 0.0001 with the metric term), which confounds the
//! comparison; "equal" gives both configurations the same lr0 so curves are
//! directly comparable.

use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::SegLossKind;
use crate::train::runlog::RunLog;
use crate::train::{train, TrainConfig};

/// A loss-spec string like "dice" or "dice+ist".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSpec {
    pub kind: SegLossKind,
    pub with_ist: bool,
}

impl LossSpec {
    pub fn parse(s: &str) -> Result<LossSpec> {
        let (base, with_ist) = match s.strip_suffix("+ist") {
            Some(base) => (base, true),
            None => (s, false),
        };
        Ok(LossSpec {
            kind: SegLossKind::parse(base)?,
            with_ist,
        })
    }

    pub fn name(&self) -> String {
        if self.with_ist {
            format!("{}+ist", self.kind.name())
        } else {
            self.kind.name().to_string()
        }
    }
}

pub fn parse_loss_list(s: &str) -> Result<Vec<LossSpec>> {
    let specs: Vec<LossSpec> = s
        .split(',')
        .map(|part| LossSpec::parse(part.trim()))
        .collect::<Result<_>>()?;
    if specs.is_empty() {
        return Err(Error::invalid("empty loss list"));
    }
    Ok(specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Paper,
    Equal,
    Both,
}

impl Protocol {
    pub fn parse(s: &str) -> Result<Protocol> {
        match s {
            "paper" => Ok(Protocol::Paper),
            "equal" => Ok(Protocol::Equal),
            "both" => Ok(Protocol::Both),
            other => Err(Error::invalid(format!(
                "unknown protocol '{other}' (expected paper, equal or both)"
            ))),
        }
    }

    fn expand(self) -> Vec<&'static str> {
        match self {
            Protocol::Paper => vec!["paper"],
            Protocol::Equal => vec!["equal"],
            Protocol::Both => vec!["paper", "equal"],
        }
    }
}

pub struct CompareSpec {
    pub losses: Vec<LossSpec>,
    pub seeds: Vec<u64>,
    pub protocol: Protocol,
    /// Validation Jaccard level for the epochs-to-threshold summary.
    pub threshold: f64,
    /// Everything except loss selection, lr0 and seed is taken from here.
    pub base: TrainConfig,
}

pub struct CompareRun {
    pub loss: LossSpec,
    pub protocol: &'static str,
    pub seed: u64,
    pub log: RunLog,
    pub epochs_to_threshold: Option<u32>,
}

impl CompareRun {
    pub fn run_name(&self) -> String {
        format!("{}_{}_seed{}", self.loss.name().replace('+', "_"), self.protocol, self.seed)
    }
}

/// Build the concrete config for one grid cell.
pub fn cell_config(base: &TrainConfig, loss: LossSpec, protocol: &str, seed: u64) -> TrainConfig {
    let mut config = base.clone();
    config.loss.seg_loss_kind = loss.kind;
    config.loss.use_is_triplet = loss.with_ist;
    config.seed = seed;
    config.lr0 = match protocol {
        // published defaults: resolved from the loss choice
        "paper" => None,
        // one shared rate; keep an explicit base lr0 if the caller set one
        _ => Some(base.lr0.unwrap_or(0.001)),
    };
    config
}

/// Run the whole grid. When `out_dir` is given, each run writes its config,
/// run log and checkpoint under `<out_dir>/<loss>_<protocol>_seed<N>/`, and
/// the summary table goes to `<out_dir>/summary.txt`.
pub fn run_compare(
    spec: &CompareSpec,
    corpus_dir: &Path,
    out_dir: Option<&Path>,
) -> Result<Vec<CompareRun>> {
    if spec.seeds.is_empty() {
        return Err(Error::invalid("compare needs at least one seed"));
    }
    let mut runs = Vec::new();
    for protocol in spec.protocol.expand() {
        for &loss in &spec.losses {
            for &seed in &spec.seeds {
                let config = cell_config(&spec.base, loss, protocol, seed);
                let run_dir = out_dir.map(|d| {
                    d.join(format!(
                        "{}_{}_seed{}",
                        loss.name().replace('+', "_"),
                        protocol,
                        seed
                    ))
                });
                let outcome = train(&config, corpus_dir, run_dir.as_deref())?;
                let epochs_to_threshold = outcome.log.epochs_to_jaccard(spec.threshold);
                runs.push(CompareRun {
                    loss,
                    protocol,
                    seed,
                    log: outcome.log,
                    epochs_to_threshold,
                });
            }
        }
    }
    if let Some(dir) = out_dir {
        let path = dir.join("summary.txt");
        std::fs::write(&path, summary_table(&runs, spec.threshold))
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(runs)
}

/// Fixed-width text table: one row per run plus the threshold column.
pub fn summary_table(runs: &[CompareRun], threshold: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:<8} {:>6} {:>12} {:>22}\n",
        "loss", "protocol", "seed", "final_jacc", format!("epochs_to_j>={threshold}")
    ));
    for run in runs {
        let final_j = run.log.final_val_jaccard().unwrap_or(f64::NAN);
        let reached = match run.epochs_to_threshold {
            Some(e) => e.to_string(),
            None => "never".to_string(),
        };
        out.push_str(&format!(
            "{:<14} {:<8} {:>6} {:>12.4} {:>22}\n",
            run.loss.name(),
            run.protocol,
            run.seed,
            final_j,
            reached
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_corpus, ShapeClass};

    #[test]
    fn loss_spec_parsing() {
        let s = LossSpec::parse("dice+ist").unwrap();
        assert_eq!(s.kind, SegLossKind::Dice);
        assert!(s.with_ist);
        assert_eq!(s.name(), "dice+ist");
        assert!(LossSpec::parse("nope").is_err());
        let list = parse_loss_list("ce, focal+ist").unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[1].name(), "focal+ist");
    }

    #[test]
    fn protocol_lr_resolution() {
        let base = TrainConfig::desk_preset();
        let ist = LossSpec { kind: SegLossKind::Dice, with_ist: true };
        let paper = cell_config(&base, ist, "paper", 1);
        assert_eq!(paper.resolved_lr0(), 0.0001);
        let equal = cell_config(&base, ist, "equal", 1);
        assert_eq!(equal.resolved_lr0(), 0.01);
        let plain = cell_config(&base, LossSpec { kind: SegLossKind::Dice, with_ist: false }, "paper", 1);
        assert_eq!(plain.resolved_lr0(), 0.001);
    }

    #[test]
    fn tiny_grid_runs_and_summarizes() {
        let dir = tempfile::tempdir().unwrap();
        generate_corpus(2, &ShapeClass::ALL, 16, 1, dir.path(), "train").unwrap();
        generate_corpus(1, &ShapeClass::ALL, 16, 2, dir.path(), "val").unwrap();
        let base = TrainConfig {
            lr0: Some(0.01),
            epochs: 1,
            batch_size: 2,
            image_size: 16,
            embed_dim: 4,
            encoder_channels: vec![4],
            ..TrainConfig::default()
        };
        let spec = CompareSpec {
            losses: parse_loss_list("dice,dice+ist").unwrap(),
            seeds: vec![1],
            protocol: Protocol::Equal,
            threshold: 0.8,
            base,
        };
        let out = dir.path().join("cmp");
        let runs = run_compare(&spec, dir.path(), Some(&out)).unwrap();
        assert_eq!(runs.len(), 2);
        assert!(out.join("dice_equal_seed1/runlog.csv").exists());
        assert!(out.join("dice_ist_equal_seed1/runlog.csv").exists());
        let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
        assert!(summary.contains("dice+ist"), "{summary}");
        assert_eq!(summary.lines().count(), 3);
    }
}
