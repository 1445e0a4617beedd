//! Versioned binary model container. Layout, all integers little-endian:
//!
//! ```text
//! magic "PXTM" | version u32 | config_len u32 | config key=value text
//! param_count u32
//! per param: name_len u32 | name | ndim u32 | dims u64... | f64 data...
//! ```
//!
//! Round-trips are bit-exact: f64 payloads are stored as raw IEEE bits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CoSegModel, ModelConfig, Param};

pub const MAGIC: &[u8; 4] = b"PXTM";
pub const VERSION: u32 = 1;

fn config_to_text(c: &ModelConfig) -> String {
    let channels: Vec<String> = c.encoder_channels.iter().map(|v| v.to_string()).collect();
    format!(
        "in_channels={}\nencoder_channels={}\nembed_dim={}\nimage_size={}\n",
        c.in_channels,
        channels.join(","),
        c.embed_dim,
        c.image_size
    )
}

fn config_from_text(text: &str) -> Result<ModelConfig> {
    let mut config = ModelConfig::default();
    let mut seen = std::collections::HashSet::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse("checkpoint config", format!("bad line '{line}'")))?;
        seen.insert(key.to_string());
        let bad = |_| Error::parse("checkpoint config", format!("bad value for {key}: '{value}'"));
        match key {
            "in_channels" => config.in_channels = value.parse().map_err(bad)?,
            "embed_dim" => config.embed_dim = value.parse().map_err(bad)?,
            "image_size" => config.image_size = value.parse().map_err(bad)?,
            "encoder_channels" => {
                config.encoder_channels = value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(bad)?;
            }
            other => {
                return Err(Error::parse(
                    "checkpoint config",
                    format!("unknown key '{other}'"),
                ))
            }
        }
    }
    for key in ["in_channels", "encoder_channels", "embed_dim", "image_size"] {
        if !seen.contains(key) {
            return Err(Error::parse("checkpoint config", format!("missing key '{key}'")));
        }
    }
    Ok(config)
}

pub fn encode(model: &CoSegModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config = config_to_text(&model.config).into_bytes();
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                "checkpoint",
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<CoSegModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::parse("checkpoint", "bad magic (expected PXTM)"));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let config_len = cur.u32("config length")? as usize;
    let config_text = std::str::from_utf8(cur.take(config_len, "config")?)
        .map_err(|_| Error::parse("checkpoint", "config is not UTF-8"))?;
    let config = config_from_text(config_text)?;

    let count = cur.u32("param count")? as usize;
    if count > 4096 {
        return Err(Error::parse("checkpoint", format!("implausible param count {count}")));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32("name length")? as usize;
        if name_len > 256 {
            return Err(Error::parse("checkpoint", "implausible name length"));
        }
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| Error::parse("checkpoint", "name is not UTF-8"))?
            .to_string();
        let ndim = cur.u32("ndim")? as usize;
        if ndim > 8 {
            return Err(Error::parse("checkpoint", "implausible rank"));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut numel: u64 = 1;
        for _ in 0..ndim {
            let d = cur.u64("dim")?;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::parse("checkpoint", "dimension overflow"))?;
            shape.push(d as usize);
        }
        // bound the allocation by what the buffer can actually hold
        if numel.checked_mul(8).map_or(true, |b| b as usize > bytes.len() - cur.pos) {
            return Err(Error::parse("checkpoint", "truncated parameter data"));
        }
        let raw = cur.take(numel as usize * 8, "parameter data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(Param { name, shape, data });
    }
    CoSegModel::from_parts(config, params)
}

pub fn save(model: &CoSegModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<CoSegModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
