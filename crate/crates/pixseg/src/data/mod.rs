//! Corpus generation, pair loading, and the P6/P5 file formats.

pub mod generator;
pub mod manifest;
pub mod pnm;

use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

pub use generator::{generate_corpus, ShapeClass};
pub use manifest::{CorpusManifest, ManifestEntry};

/// Two images sharing a common-object class, with their ground-truth masks.
#[derive(Debug)]
pub struct ImagePair {
    pub image_a: Tensor,
    pub image_b: Tensor,
    pub mask_a: Mask,
    pub mask_b: Mask,
    pub class_id: String,
}

fn check_dims(image: &Tensor, mask: &Mask, what: &str) -> Result<()> {
    let s = image.shape();
    if s[1] != mask.height() || s[2] != mask.width() {
        return Err(Error::invalid(format!(
            "{what}: image is {}x{} but mask is {}x{}",
            s[1],
            s[2],
            mask.height(),
            mask.width()
        )));
    }
    Ok(())
}

/// Subtract each channel's mean, per image. Backgrounds vary in overall
/// color from image to image; centering removes that offset so training
/// does not have to learn it, and it is applied identically at training
/// and evaluation time.
pub fn normalize_image(image: &Tensor) -> Tensor {
    let shape = image.shape().to_vec();
    let (c, hw) = (shape[0], shape[1] * shape[2]);
    let mut data = image.data().to_vec();
    for ch in 0..c {
        let slice = &mut data[ch * hw..(ch + 1) * hw];
        let mean = slice.iter().sum::<f64>() / hw as f64;
        slice.iter_mut().for_each(|v| *v -= mean);
    }
    Tensor::from_vec(shape, data)
}

/// Load one manifest entry; paths are resolved relative to `base_dir`.
/// Images are mean-centered per channel (see [`normalize_image`]).
pub fn load_pair(base_dir: &Path, entry: &ManifestEntry) -> Result<ImagePair> {
    let image_a = pnm::load_ppm(&base_dir.join(&entry.image_a))?;
    let mask_a = pnm::load_pgm(&base_dir.join(&entry.mask_a))?;
    let image_b = pnm::load_ppm(&base_dir.join(&entry.image_b))?;
    let mask_b = pnm::load_pgm(&base_dir.join(&entry.mask_b))?;
    check_dims(&image_a, &mask_a, entry.image_a.to_string_lossy().as_ref())?;
    check_dims(&image_b, &mask_b, entry.image_b.to_string_lossy().as_ref())?;
    Ok(ImagePair {
        image_a: normalize_image(&image_a),
        image_b: normalize_image(&image_b),
        mask_a,
        mask_b,
        class_id: entry.class_id.clone(),
    })
}

pub fn save_mask(mask: &Mask, path: &Path) -> Result<()> {
    pnm::save_pgm(mask, path)
}
