//! Binary portable pixmap (P6) and graymap (P5) encoding and decoding.
//!
//! Images are [3,H,W] tensors with values in [0,1], written with maxval 255.
//! Masks are written as 0/255 graymaps and read back through a threshold at
//! half the declared maxval, so externally produced grayscale masks load as
//! binary. Decoders never trust declared sizes beyond what the buffer
//! actually holds.

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

const MAX_DIM: usize = 1 << 15;

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderReader { bytes, pos: 0 }
    }

    /// Next whitespace-delimited token, skipping '#' comments.
    fn token(&mut self) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse("pnm header", "unexpected end of header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        let s = std::str::from_utf8(tok)
            .map_err(|_| Error::parse("pnm header", format!("{what} is not ASCII")))?;
        let v: usize = s
            .parse()
            .map_err(|_| Error::parse("pnm header", format!("bad {what} '{s}'")))?;
        Ok(v)
    }

    /// Consume the single whitespace byte separating the header from pixel
    /// data, and return the rest.
    fn raster(mut self) -> Result<&'a [u8]> {
        if self.pos >= self.bytes.len() || !self.bytes[self.pos].is_ascii_whitespace() {
            return Err(Error::parse("pnm header", "missing separator before raster"));
        }
        self.pos += 1;
        Ok(&self.bytes[self.pos..])
    }
}

fn read_header<'a>(bytes: &'a [u8], magic: &str) -> Result<(usize, usize, usize, &'a [u8])> {
    let mut r = HeaderReader::new(bytes);
    let tok = r.token()?;
    if tok != magic.as_bytes() {
        return Err(Error::parse(
            "pnm header",
            format!("expected magic {magic}, got {:?}", String::from_utf8_lossy(tok)),
        ));
    }
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(Error::parse(
            "pnm header",
            format!("unsupported dimensions {width}x{height}"),
        ));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse("pnm header", format!("unsupported maxval {maxval}")));
    }
    let raster = r.raster()?;
    Ok((width, height, maxval, raster))
}

/// Encode a [3,H,W] tensor with values in [0,1] as a binary P6 pixmap.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::invalid(format!("expected [3,H,W] image, got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let hw = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * hw);
    for p in 0..hw {
        for c in 0..3 {
            let v = image.data()[c * hw + p].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Decode a binary P6 pixmap into a [3,H,W] tensor scaled to [0,1].
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let (w, h, maxval, raster) = read_header(bytes, "P6")?;
    let hw = h * w;
    let expected = 3 * hw;
    if raster.len() < expected {
        return Err(Error::parse(
            "P6 raster",
            format!("expected {expected} bytes, found {}", raster.len()),
        ));
    }
    let scale = 1.0 / maxval as f64;
    let mut data = vec![0.0; expected];
    for p in 0..hw {
        for c in 0..3 {
            data[c * hw + p] = raster[p * 3 + c] as f64 * scale;
        }
    }
    Ok(Tensor::from_vec(vec![3, h, w], data))
}

/// Encode a mask as a binary P5 graymap: 0 = background, 255 = foreground.
pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Decode a binary P5 graymap into a mask, thresholding at half the
/// declared maxval (strictly above is foreground).
pub fn decode_pgm(bytes: &[u8]) -> Result<Mask> {
    let (w, h, maxval, raster) = read_header(bytes, "P5")?;
    let expected = h * w;
    if raster.len() < expected {
        return Err(Error::parse(
            "P5 raster",
            format!("expected {expected} bytes, found {}", raster.len()),
        ));
    }
    let threshold = maxval as f64 * 0.5;
    let data = raster[..expected]
        .iter()
        .map(|&v| v as f64 > threshold)
        .collect();
    Ok(Mask::new(h, w, data))
}

pub fn save_ppm(image: &Tensor, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, encode_ppm(image)?).map_err(|e| Error::io(path, e))
}

pub fn load_ppm(path: &std::path::Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn save_pgm(mask: &Mask, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

pub fn load_pgm(path: &std::path::Path) -> Result<Mask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}
