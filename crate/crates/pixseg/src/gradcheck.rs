//! Finite-difference verification of every loss and of the end-to-end
//! model. Points are sampled away from hinge kinks and probability
//! saturation so the analytic/numeric comparison is meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::{
    combined_loss, cross_entropy_loss, dice_loss, focal_loss, is_triplet_loss, LossConfig,
};
use crate::mask::Mask;
use crate::model::{init_params, CoSegModel, ModelConfig, ParamBinding};
use crate::sampler::{sample_pixel_sets, SampleOutcome, SampleSets};
use crate::seeds;
use crate::tensor::{grad_check, Tensor};

pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn random_logits(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
    Tensor::from_vec(
        vec![2, h, w],
        (0..2 * h * w).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    )
}

/// Random binary mask guaranteed to contain both classes.
fn random_mask_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
    loop {
        let data: Vec<f64> = (0..h * w)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let ones = data.iter().filter(|&&v| v == 1.0).count();
        if ones > 0 && ones < h * w {
            return Tensor::from_vec(vec![h, w], data);
        }
    }
}

/// Random row sets whose hinge arguments all sit clear of the kink.
fn random_interior_sets(rng: &mut ChaCha8Rng, k: usize, d: usize, margin: f64) -> [Vec<f64>; 4] {
    loop {
        let mut sets: [Vec<f64>; 4] = Default::default();
        for s in &mut sets {
            *s = (0..k * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        }
        let sq = |a: &[f64], b: &[f64], row: usize| -> f64 {
            (0..d)
                .map(|j| (a[row * d + j] - b[row * d + j]).powi(2))
                .sum()
        };
        let [f1, f2, b1, b2] = &sets;
        let clear = (0..k).all(|i| {
            let arg1 = sq(f1, f2, i) - sq(f1, b1, i) + margin;
            let arg2 = sq(b1, b2, i) - sq(b1, f2, i) + margin;
            arg1.abs() > 1e-2 && arg2.abs() > 1e-2
        });
        if clear {
            return sets;
        }
    }
}

fn sets_with(slot: usize, value: &Tensor, fixed: &[Tensor; 4], k: usize, d: usize) -> SampleSets {
    let pick = |i: usize| {
        if i == slot {
            value.clone()
        } else {
            fixed[i].clone()
        }
    };
    SampleSets {
        f1: pick(0),
        f2: pick(1),
        b1: pick(2),
        b2: pick(3),
        k_eff: k,
        dim: d,
        coords_f1: vec![],
        coords_f2: vec![],
        coords_b1: vec![],
        coords_b2: vec![],
    }
}

/// Check CE, Dice, Focal and IS-Triplet gradients against central finite
/// differences at `points` random interior points each.
pub fn check_losses(seed: u64, points: usize) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[seeds::tag("gradcheck")]));
    let tolerance = 1e-4;
    let eps = 1e-6;
    let (h, w) = (4, 4);
    let (mut ce, mut dice, mut focal, mut ist) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);

    for _ in 0..points {
        let mask = random_mask_tensor(&mut rng, h, w);
        let point = random_logits(&mut rng, h, w);
        ce = ce.max(grad_check(|l| cross_entropy_loss(l, &mask), &point, eps)?);
        dice = dice.max(grad_check(
            |l| dice_loss(&l.softmax_channel()?, &mask, 1.0),
            &point,
            eps,
        )?);
        focal = focal.max(grad_check(
            |l| focal_loss(&l.softmax_channel()?, &mask, 2.0),
            &point,
            eps,
        )?);

        let (k, d, margin) = (3usize, 4usize, 0.7f64);
        let raw = random_interior_sets(&mut rng, k, d, margin);
        let fixed: [Tensor; 4] =
            std::array::from_fn(|i| Tensor::from_vec(vec![k, d], raw[i].clone()));
        for slot in 0..4 {
            let err = grad_check(
                |t| is_triplet_loss(&sets_with(slot, t, &fixed, k, d), margin),
                &fixed[slot],
                eps,
            )?;
            ist = ist.max(err);
        }
    }

    Ok(vec![
        GradCheckReport { name: "cross_entropy".into(), max_rel_err: ce, tolerance },
        GradCheckReport { name: "dice".into(), max_rel_err: dice, tolerance },
        GradCheckReport { name: "focal".into(), max_rel_err: focal, tolerance },
        GradCheckReport { name: "is_triplet".into(), max_rel_err: ist, tolerance },
    ])
}

struct ModelProbe {
    config: ModelConfig,
    img_a: Tensor,
    img_b: Tensor,
    mask_a: Mask,
    mask_b: Mask,
    loss: LossConfig,
    lambda: f64,
    sample_seeds: [u64; 2],
}

impl ModelProbe {
    fn loss_value(&self, model: &CoSegModel, binding: &ParamBinding) -> Result<Tensor> {
        let out = model.forward_pair(binding, &self.img_a, &self.img_b)?;
        let sides = [
            (&out.logits_a, &out.emb_a, &self.mask_a, self.sample_seeds[0]),
            (&out.logits_b, &out.emb_b, &self.mask_b, self.sample_seeds[1]),
        ];
        let mut seg_terms = Vec::new();
        let mut ist_terms = Vec::new();
        for (logits, emb, mask, sample_seed) in sides {
            seg_terms.push(dice_loss(
                &logits.softmax_channel()?,
                &mask.to_tensor(),
                self.loss.dice_smooth,
            )?);
            if let SampleOutcome::Sets(sets) =
                sample_pixel_sets(emb, mask, self.loss.k, sample_seed)?
            {
                ist_terms.push(is_triplet_loss(&sets, self.loss.margin_m)?);
            }
        }
        let seg = seg_terms[0].add(&seg_terms[1])?.scale(0.5);
        let ist = match ist_terms.len() {
            0 => Tensor::scalar(0.0),
            1 => ist_terms[0].clone(),
            _ => ist_terms[0].add(&ist_terms[1])?.scale(0.5),
        };
        combined_loss(&seg, &ist, self.lambda)
    }
}

/// End-to-end check: combined loss of a tiny model vs finite differences
/// over `coords` randomly chosen parameter coordinates.
pub fn check_model(seed: u64, coords: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[seeds::tag("gradcheck-model")]));
    let config = ModelConfig {
        in_channels: 3,
        encoder_channels: vec![6],
        embed_dim: 4,
        image_size: 8,
    };
    let n = 3 * 8 * 8;
    let img = |rng: &mut ChaCha8Rng| {
        Tensor::from_vec(vec![3, 8, 8], (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
    };
    let mask = |rng: &mut ChaCha8Rng| {
        Mask::from_tensor(&random_mask_tensor(rng, 8, 8)).expect("binary by construction")
    };
    let probe = ModelProbe {
        config: config.clone(),
        img_a: img(&mut rng),
        img_b: img(&mut rng),
        mask_a: mask(&mut rng),
        mask_b: mask(&mut rng),
        loss: LossConfig {
            margin_m: 1.0,
            k: 8,
            ..LossConfig::default()
        },
        lambda: 0.5,
        sample_seeds: [rng.gen(), rng.gen()],
    };

    let model = init_params(&config, seeds::derive(seed, &[seeds::tag("gc-init")]))?;
    let binding = model.bind(true);
    let loss = probe.loss_value(&model, &binding)?;
    loss.backward()?;
    let grads = binding.grads();

    let eps = 1e-5;
    let mut max_err = 0.0f64;
    for _ in 0..coords {
        let pi = rng.gen_range(0..model.params.len());
        let ci = rng.gen_range(0..model.params[pi].data.len());
        let eval = |delta: f64| -> Result<f64> {
            let mut params = model.params.clone();
            params[pi].data[ci] += delta;
            let perturbed = CoSegModel::from_parts(probe.config.clone(), params)?;
            let binding = perturbed.bind(false);
            Ok(probe.loss_value(&perturbed, &binding)?.item())
        };
        let numeric = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
        let analytic = grads[pi][ci];
        let err = (analytic - numeric).abs() / analytic.abs().max(1.0);
        max_err = max_err.max(err);
    }
    Ok(GradCheckReport {
        name: "model_end_to_end".into(),
        max_rel_err: max_err,
        tolerance: 1e-3,
    })
}

/// The full suite at its contractual sizes: 20 points per loss, 50 model
/// coordinates.
pub fn run_all(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut reports = check_losses(seed, 20)?;
    reports.push(check_model(seed, 50)?);
    Ok(reports)
}
