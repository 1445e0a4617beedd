//! Corpus manifests: one tab-separated line per image pair, UTF-8,
//! '#' comment lines. Fields: image_a, mask_a, image_b, mask_b, class_id.
//! Split and generation seed travel as comment headers.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_a: PathBuf,
    pub mask_a: PathBuf,
    pub image_b: PathBuf,
    pub mask_b: PathBuf,
    pub class_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub split: String,
    pub seed: u64,
}

impl CorpusManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# pixseg corpus manifest\n");
        out.push_str(&format!("# split={}\n", self.split));
        out.push_str(&format!("# seed={}\n", self.seed));
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.image_a.display(),
                e.mask_a.display(),
                e.image_b.display(),
                e.mask_b.display(),
                e.class_id
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CorpusManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_manifest(&text)
    }
}

pub fn parse_manifest(text: &str) -> Result<CorpusManifest> {
    let mut entries = Vec::new();
    let mut split = String::from("unknown");
    let mut seed = 0u64;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("split=") {
                split = v.trim().to_string();
            } else if let Some(v) = comment.strip_prefix("seed=") {
                seed = v.trim().parse().map_err(|_| {
                    Error::parse("manifest", format!("line {}: bad seed '{v}'", lineno + 1))
                })?;
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                "manifest",
                format!("line {}: expected 5 tab-separated fields, got {}", lineno + 1, fields.len()),
            ));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::parse(
                "manifest",
                format!("line {}: empty field", lineno + 1),
            ));
        }
        entries.push(ManifestEntry {
            image_a: PathBuf::from(fields[0]),
            mask_a: PathBuf::from(fields[1]),
            image_b: PathBuf::from(fields[2]),
            mask_b: PathBuf::from(fields[3]),
            class_id: fields[4].to_string(),
        });
    }
    Ok(CorpusManifest {
        entries,
        split,
        seed,
    })
}
