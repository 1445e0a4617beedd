//! Balanced foreground/background triple sampling.
//!
//! Four row-aligned sets are drawn from a per-pixel embedding map: F1 and F2
//! from mask-foreground pixels, B1 and B2 from background pixels. Each set
//! is an independent uniform draw without replacement, so F1 and F2 may
//! overlap as sets but never repeat a pixel within a set. Row i of the four
//! matrices forms the i-th pair of triples; the effective count is
//! K_eff = min(K, |foreground|, |background|).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

/// The four K_eff x D embedding matrices plus the pixel coordinates each
/// row was gathered from. Rows stay connected to the embedding map's
/// gradient graph.
pub struct SampleSets {
    pub f1: Tensor,
    pub f2: Tensor,
    pub b1: Tensor,
    pub b2: Tensor,
    pub k_eff: usize,
    pub dim: usize,
    pub coords_f1: Vec<(usize, usize)>,
    pub coords_f2: Vec<(usize, usize)>,
    pub coords_b1: Vec<(usize, usize)>,
    pub coords_b2: Vec<(usize, usize)>,
}

/// Outcome of sampling: either the four sets, or a signal to drop the
/// metric-learning term for this image because one class is empty.
pub enum SampleOutcome {
    Sets(SampleSets),
    Skip,
}

/// Draw `count` distinct elements uniformly from `pool` (partial
/// Fisher-Yates on a scratch copy).
fn draw_without_replacement(
    pool: &[(usize, usize)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    debug_assert!(count <= pool.len());
    let mut scratch = pool.to_vec();
    for i in 0..count {
        let j = rng.gen_range(i..scratch.len());
        scratch.swap(i, j);
    }
    scratch.truncate(count);
    scratch
}

/// Sample the F1/F2/B1/B2 sets from a [D,H,W] embedding map and its mask.
/// Returns [`SampleOutcome::Skip`] when the mask has no foreground or no
/// background pixels.
pub fn sample_pixel_sets(
    embedding: &Tensor,
    mask: &Mask,
    k: usize,
    rng_seed: u64,
) -> Result<SampleOutcome> {
    let shape = embedding.shape();
    if shape.len() != 3 {
        return Err(Error::invalid(format!(
            "embedding must be [D,H,W], got {shape:?}"
        )));
    }
    let (dim, h, w) = (shape[0], shape[1], shape[2]);
    if mask.height() != h || mask.width() != w {
        return Err(Error::ShapeMismatch {
            left: vec![h, w],
            right: vec![mask.height(), mask.width()],
        });
    }
    if k == 0 {
        return Err(Error::invalid("K must be >= 1"));
    }

    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                fg.push((r, c));
            } else {
                bg.push((r, c));
            }
        }
    }
    if fg.is_empty() || bg.is_empty() {
        return Ok(SampleOutcome::Skip);
    }
    let k_eff = k.min(fg.len()).min(bg.len());

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let coords_f1 = draw_without_replacement(&fg, k_eff, &mut rng);
    let coords_f2 = draw_without_replacement(&fg, k_eff, &mut rng);
    let coords_b1 = draw_without_replacement(&bg, k_eff, &mut rng);
    let coords_b2 = draw_without_replacement(&bg, k_eff, &mut rng);

    Ok(SampleOutcome::Sets(SampleSets {
        f1: embedding.gather_pixels(&coords_f1)?,
        f2: embedding.gather_pixels(&coords_f2)?,
        b1: embedding.gather_pixels(&coords_b1)?,
        b2: embedding.gather_pixels(&coords_b2)?,
        k_eff,
        dim,
        coords_f1,
        coords_f2,
        coords_b1,
        coords_b2,
    }))
}

/// Squared Euclidean distance between corresponding rows of two K x D
/// matrices, as a differentiable length-K vector.
pub fn rowwise_sq_dist(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() || a.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    a.sub(b)?.square().sum_axis(1)
}
