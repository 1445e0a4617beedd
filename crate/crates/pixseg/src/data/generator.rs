//! Synthetic co-segmentation corpus: each pair of images shares one shape
//! class drawn over textured noise, with 0-2 distractor shapes of other
//! classes per image. The common-class shape is what the masks label; it is
//! drawn on top in a saturated color shared by both images of the pair,
//! while distractors take low-contrast colors near their own background, so
//! the common object is findable at desk scale yet still the only thing the
//! two images have in common. Foreground covers 5-30% of the pixels so the
//! usual class imbalance is present. Everything is deterministic per seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::manifest::{CorpusManifest, ManifestEntry};
use crate::data::pnm;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::seeds;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Disc,
    Square,
    Triangle,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Disc, ShapeClass::Square, ShapeClass::Triangle];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeClass::Disc => "disc",
            ShapeClass::Square => "square",
            ShapeClass::Triangle => "triangle",
        }
    }

    pub fn parse(s: &str) -> Result<ShapeClass> {
        match s {
            "disc" => Ok(ShapeClass::Disc),
            "square" => Ok(ShapeClass::Square),
            "triangle" => Ok(ShapeClass::Triangle),
            other => Err(Error::invalid(format!("unknown shape class '{other}'"))),
        }
    }
}

struct PlacedShape {
    class: ShapeClass,
    cx: f64,
    cy: f64,
    /// Characteristic extent: disc radius, square half-side, triangle half-base.
    half: f64,
    color: [f64; 3],
}

impl PlacedShape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self.class {
            ShapeClass::Disc => {
                let (dx, dy) = (x - self.cx, y - self.cy);
                dx * dx + dy * dy <= self.half * self.half
            }
            ShapeClass::Square => {
                (x - self.cx).abs() <= self.half && (y - self.cy).abs() <= self.half
            }
            ShapeClass::Triangle => {
                // isoceles, apex up, height 1.8 * half
                let height = 1.8 * self.half;
                let top = self.cy - height / 2.0;
                if y < top || y > top + height {
                    return false;
                }
                let hw = (y - top) / height * self.half;
                (x - self.cx).abs() <= hw
            }
        }
    }
}

/// Extent that makes the shape cover roughly `frac` of an `size`^2 image.
fn half_extent_for_fraction(class: ShapeClass, frac: f64, size: usize) -> f64 {
    let area = frac * (size * size) as f64;
    match class {
        ShapeClass::Disc => (area / std::f64::consts::PI).sqrt(),
        ShapeClass::Square => area.sqrt() / 2.0,
        // area = 1/2 * base * height = 1/2 * 2h * 1.8h = 1.8 h^2
        ShapeClass::Triangle => (area / 1.8).sqrt(),
    }
}

/// Saturated color for the common shape: each channel near 0 or near 1.
fn foreground_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut c = [0.0; 3];
    for ch in &mut c {
        *ch = if rng.gen_bool(0.5) {
            rng.gen_range(0.0..0.12)
        } else {
            rng.gen_range(0.88..1.0)
        };
    }
    c
}

/// Low-contrast distractor color: a bounded offset from the background base,
/// kept in the mid range so it never resembles a foreground color.
fn distractor_color(rng: &mut ChaCha8Rng, base: &[f64; 3]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for (ch, b) in c.iter_mut().zip(base) {
        let magnitude = rng.gen_range(0.10..0.25);
        let offset = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
        *ch = (b + offset).clamp(0.2, 0.8);
    }
    c
}

fn place_shape(
    rng: &mut ChaCha8Rng,
    class: ShapeClass,
    frac: f64,
    size: usize,
    color: [f64; 3],
) -> PlacedShape {
    let half = half_extent_for_fraction(class, frac, size);
    let reach = match class {
        ShapeClass::Triangle => 0.9 * half,
        _ => half,
    };
    let lo = reach + 1.0;
    let hi = size as f64 - reach - 1.0;
    PlacedShape {
        class,
        cx: rng.gen_range(lo..hi),
        cy: rng.gen_range(lo..hi),
        half,
        color,
    }
}

/// Render one image: noise background, distractors, then the common shape
/// in the pair's shared foreground color. Returns the image and the
/// common-shape mask.
fn render_image(
    rng: &mut ChaCha8Rng,
    common: ShapeClass,
    fg_color: [f64; 3],
    size: usize,
) -> (Tensor, Mask) {
    let hw = size * size;
    let base = [
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.25..0.75),
    ];

    let n_distractors = rng.gen_range(0..=2usize);
    let mut shapes: Vec<PlacedShape> = Vec::new();
    for _ in 0..n_distractors {
        let others: Vec<ShapeClass> = ShapeClass::ALL
            .iter()
            .copied()
            .filter(|c| *c != common)
            .collect();
        let class = others[rng.gen_range(0..others.len())];
        let frac = rng.gen_range(0.02..0.10);
        let color = distractor_color(rng, &base);
        shapes.push(place_shape(rng, class, frac, size, color));
    }
    let frac = rng.gen_range(0.07..0.26);
    let common_shape = place_shape(rng, common, frac, size, fg_color);

    let mut data = vec![0.0; 3 * hw];
    let mut mask = vec![false; hw];
    for y in 0..size {
        for x in 0..size {
            let p = y * size + x;
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut color = [
                (base[0] + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0),
                (base[1] + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0),
                (base[2] + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0),
            ];
            for s in &shapes {
                if s.contains(fx, fy) {
                    color = s.color;
                }
            }
            if common_shape.contains(fx, fy) {
                color = common_shape.color;
                mask[p] = true;
            }
            for c in 0..3 {
                data[c * hw + p] = color[c];
            }
        }
    }
    (
        Tensor::from_vec(vec![3, size, size], data),
        Mask::new(size, size, mask),
    )
}

/// One image whose common-shape mask covers 5-30% of the pixels; degenerate
/// rasterizations are re-rolled from the same stream.
fn render_valid(
    rng: &mut ChaCha8Rng,
    common: ShapeClass,
    fg_color: [f64; 3],
    size: usize,
) -> (Tensor, Mask) {
    loop {
        let (img, mask) = render_image(rng, common, fg_color, size);
        let frac = mask.foreground_count() as f64 / (size * size) as f64;
        if (0.05..=0.30).contains(&frac) {
            return (img, mask);
        }
    }
}

/// Generate `n_pairs` image pairs into `out_dir` and return the manifest
/// (also written to `out_dir/manifest_<split>.tsv`). Paths inside the
/// manifest are relative to `out_dir`.
pub fn generate_corpus(
    n_pairs: usize,
    classes: &[ShapeClass],
    image_size: usize,
    seed: u64,
    out_dir: &Path,
    split: &str,
) -> Result<CorpusManifest> {
    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs must be >= 1"));
    }
    if classes.is_empty() {
        return Err(Error::invalid("at least one shape class required"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let split_tag = seeds::tag(split);
    let mut entries = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[split_tag, i as u64]));
        let common = classes[rng.gen_range(0..classes.len())];
        let fg_color = foreground_color(&mut rng);
        let (img_a, mask_a) = render_valid(&mut rng, common, fg_color, image_size);
        let (img_b, mask_b) = render_valid(&mut rng, common, fg_color, image_size);

        let stem = format!("{split}_{i:04}");
        let names = [
            format!("{stem}_a.ppm"),
            format!("{stem}_a.pgm"),
            format!("{stem}_b.ppm"),
            format!("{stem}_b.pgm"),
        ];
        pnm::save_ppm(&img_a, &out_dir.join(&names[0]))?;
        pnm::save_pgm(&mask_a, &out_dir.join(&names[1]))?;
        pnm::save_ppm(&img_b, &out_dir.join(&names[2]))?;
        pnm::save_pgm(&mask_b, &out_dir.join(&names[3]))?;
        entries.push(ManifestEntry {
            image_a: names[0].clone().into(),
            mask_a: names[1].clone().into(),
            image_b: names[2].clone().into(),
            mask_b: names[3].clone().into(),
            class_id: common.name().to_string(),
        });
    }
    let manifest = CorpusManifest {
        entries,
        split: split.to_string(),
        seed,
    };
    manifest.save(&out_dir.join(format!("manifest_{split}.tsv")))?;
    Ok(manifest)
}
