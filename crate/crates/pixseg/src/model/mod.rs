//! Siamese encoder -> correlation block -> Siamese decoder, with a
//! D-channel embedding head at input resolution and a 1x1 logit head on top
//! of the embedding.
//!
//! Both branches run the same parameter tensors, so one backward pass
//! accumulates gradients from both images. The correlation block scores
//! every bottleneck position of one branch against every position of the
//! other, which is what lets the network find the *common* object rather
//! than just the most salient one.

pub mod checkpoint;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, UpsampleMode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Output channels of each stride-2 encoder block.
    pub encoder_channels: Vec<usize>,
    /// Channels of the pixel embedding map.
    pub embed_dim: usize,
    /// Square input extent the fusion convolution is built for; must be
    /// divisible by 2^depth.
    pub image_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 3,
            encoder_channels: vec![16, 32, 64],
            embed_dim: 64,
            image_size: 64,
        }
    }
}

impl ModelConfig {
    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn bottleneck_size(&self) -> usize {
        self.image_size >> self.depth()
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.is_empty() {
            return Err(Error::invalid("encoder needs at least one block"));
        }
        if self.in_channels == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("channel counts must be >= 1"));
        }
        let divisor = 1usize << self.depth();
        if self.image_size == 0 || self.image_size % divisor != 0 || self.image_size / divisor == 0
        {
            return Err(Error::invalid(format!(
                "image size {} must be a positive multiple of {divisor} (encoder depth {})",
                self.image_size,
                self.depth()
            )));
        }
        Ok(())
    }
}

/// One named parameter blob.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug)]
pub struct CoSegModel {
    pub config: ModelConfig,
    pub params: Vec<Param>,
    index: HashMap<String, usize>,
}

/// Leaf tensors for one forward/backward episode, aligned with
/// `CoSegModel::params`. Bind once per batch so gradients from every image
/// in the batch accumulate on the same leaves.
pub struct ParamBinding {
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamBinding {
    fn get(&self, name: &str) -> &Tensor {
        &self.tensors[self.index[name]]
    }

    /// Accumulated gradients in parameter order (zeros for untouched ones).
    pub fn grads(&self) -> Vec<Vec<f64>> {
        self.tensors
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect()
    }
}

/// Outputs of one Siamese pass.
#[derive(Debug)]
pub struct PairOutput {
    pub emb_a: Tensor,
    pub logits_a: Tensor,
    pub emb_b: Tensor,
    pub logits_b: Tensor,
}

/// All-pairs correlation of two [C,h,w] feature maps:
/// out[q, i, j] = <featA[:, i, j], featB at flattened position q> / C.
pub fn correlation_block(feat_a: &Tensor, feat_b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (feat_a.shape(), feat_b.shape());
    if sa != sb || sa.len() != 3 {
        return Err(Error::ShapeMismatch {
            left: sa.to_vec(),
            right: sb.to_vec(),
        });
    }
    let (c, h, w) = (sa[0], sa[1], sa[2]);
    let hw = h * w;
    let a_mat = feat_a.reshape(vec![c, hw])?;
    let b_mat = feat_b.reshape(vec![c, hw])?;
    b_mat
        .transpose2d()?
        .matmul(&a_mat)?
        .scale(1.0 / c as f64)
        .reshape(vec![hw, h, w])
}

/// Parameter layout shared by init and forward.
fn param_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let ch = &config.encoder_channels;
    let depth = ch.len();
    let bottleneck_hw = config.bottleneck_size() * config.bottleneck_size();
    let mut specs = Vec::new();

    let mut prev = config.in_channels;
    for (i, &c) in ch.iter().enumerate() {
        specs.push((format!("enc{}.weight", i + 1), vec![c, prev, 3, 3]));
        specs.push((format!("enc{}.bias", i + 1), vec![c]));
        prev = c;
    }
    let c_last = *ch.last().unwrap();
    specs.push(("fuse.weight".into(), vec![c_last, c_last + bottleneck_hw, 1, 1]));
    specs.push(("fuse.bias".into(), vec![c_last]));

    let mut cur = c_last;
    for i in 1..=depth {
        let (skip, out) = if i < depth {
            (ch[depth - i - 1], ch[depth - i - 1])
        } else {
            (0, ch[0])
        };
        specs.push((format!("dec{i}.weight"), vec![out, cur + skip, 3, 3]));
        specs.push((format!("dec{i}.bias"), vec![out]));
        cur = out;
    }
    specs.push(("embed.weight".into(), vec![config.embed_dim, cur, 3, 3]));
    specs.push(("embed.bias".into(), vec![config.embed_dim]));
    specs.push(("logit.weight".into(), vec![2, config.embed_dim, 1, 1]));
    specs.push(("logit.bias".into(), vec![2]));
    specs
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init_params(config: &ModelConfig, rng_seed: u64) -> Result<CoSegModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut params = Vec::new();
    let mut index = HashMap::new();
    for (name, shape) in param_specs(config) {
        let n: usize = shape.iter().product();
        let data = if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            // conv weight [out, in, k, k]
            let ksq = shape[2] * shape[3];
            let (fan_out, fan_in) = (shape[0] * ksq, shape[1] * ksq);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-a..a)).collect()
        };
        index.insert(name.clone(), params.len());
        params.push(Param { name, shape, data });
    }
    Ok(CoSegModel {
        config: config.clone(),
        params,
        index,
    })
}

impl CoSegModel {
    pub(crate) fn from_parts(config: ModelConfig, params: Vec<Param>) -> Result<CoSegModel> {
        config.validate()?;
        let expected = param_specs(&config);
        if expected.len() != params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                expected.len(),
                params.len()
            )));
        }
        let mut index = HashMap::new();
        for (p, (name, shape)) in params.iter().zip(&expected) {
            if &p.name != name || &p.shape != shape {
                return Err(Error::invalid(format!(
                    "parameter mismatch: expected {name} {shape:?}, got {} {:?}",
                    p.name, p.shape
                )));
            }
            index.insert(p.name.clone(), index.len());
        }
        Ok(CoSegModel {
            config,
            params,
            index,
        })
    }

    /// Leaf tensors for the parameters. `trainable = false` keeps the whole
    /// forward pass outside the gradient graph (cheap inference).
    pub fn bind(&self, trainable: bool) -> ParamBinding {
        let tensors = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    Tensor::leaf(p.shape.clone(), p.data.clone())
                } else {
                    Tensor::from_vec(p.shape.clone(), p.data.clone())
                }
            })
            .collect();
        ParamBinding {
            tensors,
            index: self.index.clone(),
        }
    }

    fn encode(&self, binding: &ParamBinding, image: &Tensor) -> Result<Vec<Tensor>> {
        let mut features = Vec::new();
        let mut cur = image.clone();
        for i in 1..=self.config.depth() {
            cur = cur
                .conv2d(binding.get(&format!("enc{i}.weight")), 1, 1)?
                .add_channel_bias(binding.get(&format!("enc{i}.bias")))?
                .relu()
                .avgpool2x()?;
            features.push(cur.clone());
        }
        Ok(features)
    }

    /// Decode one branch given its own encoder features and the fused
    /// bottleneck; returns (embedding [D,H,W], logits [2,H,W]).
    fn decode(
        &self,
        binding: &ParamBinding,
        features: &[Tensor],
        fused: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let depth = self.config.depth();
        let mut cur = fused.clone();
        for i in 1..=depth {
            cur = cur.upsample2x(UpsampleMode::Nearest)?;
            if i < depth {
                cur = cur.concat_channels(&features[depth - i - 1])?;
            }
            cur = cur
                .conv2d(binding.get(&format!("dec{i}.weight")), 1, 1)?
                .add_channel_bias(binding.get(&format!("dec{i}.bias")))?
                .relu();
        }
        let embedding = cur
            .conv2d(binding.get("embed.weight"), 1, 1)?
            .add_channel_bias(binding.get("embed.bias"))?;
        let logits = embedding
            .conv2d(binding.get("logit.weight"), 1, 0)?
            .add_channel_bias(binding.get("logit.bias"))?;
        Ok((embedding, logits))
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let s = image.shape();
        let want = [self.config.in_channels, self.config.image_size, self.config.image_size];
        if s != want {
            return Err(Error::invalid(format!(
                "input shape {s:?} does not match model input {want:?} (spatial dims must be divisible by {})",
                1usize << self.config.depth()
            )));
        }
        Ok(())
    }

    /// Run both images through the shared-weight network.
    pub fn forward_pair(
        &self,
        binding: &ParamBinding,
        img_a: &Tensor,
        img_b: &Tensor,
    ) -> Result<PairOutput> {
        self.check_input(img_a)?;
        self.check_input(img_b)?;

        let feats_a = self.encode(binding, img_a)?;
        let feats_b = self.encode(binding, img_b)?;
        let bottom_a = feats_a.last().unwrap();
        let bottom_b = feats_b.last().unwrap();

        let fuse = |own: &Tensor, other: &Tensor| -> Result<Tensor> {
            let corr = correlation_block(own, other)?;
            own.concat_channels(&corr)?
                .conv2d(binding.get("fuse.weight"), 1, 0)?
                .add_channel_bias(binding.get("fuse.bias"))
                .map(|t| t.relu())
        };
        let fused_a = fuse(bottom_a, bottom_b)?;
        let fused_b = fuse(bottom_b, bottom_a)?;

        let (emb_a, logits_a) = self.decode(binding, &feats_a, &fused_a)?;
        let (emb_b, logits_b) = self.decode(binding, &feats_b, &fused_b)?;
        Ok(PairOutput {
            emb_a,
            logits_a,
            emb_b,
            logits_b,
        })
    }
}
