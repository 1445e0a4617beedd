//! Per-epoch training log and its CSV form.

use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "epoch,train_loss,train_seg_loss,train_ist_loss,lr,lambda,val_precision,val_pixel_accuracy,val_jaccard,wall_seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: u32,
    pub train_loss: f64,
    pub train_seg_loss: f64,
    pub train_ist_loss: f64,
    pub lr: f64,
    pub lambda: f64,
    pub val_precision: f64,
    pub val_pixel_accuracy: f64,
    pub val_jaccard: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<EpochRow>,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.train_loss,
                r.train_seg_loss,
                r.train_ist_loss,
                r.lr,
                r.lambda,
                r.val_precision,
                r.val_pixel_accuracy,
                r.val_jaccard,
                r.wall_seconds
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<RunLog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_csv(&text)
    }

    /// First epoch whose validation Jaccard reaches `threshold`, if any.
    pub fn epochs_to_jaccard(&self, threshold: f64) -> Option<u32> {
        self.rows
            .iter()
            .find(|r| r.val_jaccard >= threshold)
            .map(|r| r.epoch)
    }

    pub fn final_val_jaccard(&self) -> Option<f64> {
        self.rows.last().map(|r| r.val_jaccard)
    }
}

pub fn parse_csv(text: &str) -> Result<RunLog> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("runlog csv", "empty file"))?;
    if header.trim_end() != CSV_HEADER {
        return Err(Error::parse("runlog csv", format!("unexpected header '{header}'")));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::parse(
                "runlog csv",
                format!("line {}: expected 10 fields, got {}", lineno + 2, f.len()),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse("runlog csv", format!("line {}: bad number '{s}'", lineno + 2)))
        };
        rows.push(EpochRow {
            epoch: f[0]
                .parse()
                .map_err(|_| Error::parse("runlog csv", format!("line {}: bad epoch", lineno + 2)))?,
            train_loss: num(f[1])?,
            train_seg_loss: num(f[2])?,
            train_ist_loss: num(f[3])?,
            lr: num(f[4])?,
            lambda: num(f[5])?,
            val_precision: num(f[6])?,
            val_pixel_accuracy: num(f[7])?,
            val_jaccard: num(f[8])?,
            wall_seconds: num(f[9])?,
        });
    }
    Ok(RunLog { rows })
}
