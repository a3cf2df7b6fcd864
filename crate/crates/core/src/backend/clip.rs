//! CLIP checkpoints in the Hugging Face layout, run on the CPU with candle.
//!
//! A model directory holds `config.json`, `model.safetensors`,
//! `tokenizer.json` and optionally `preprocessor_config.json`. Both the
//! OpenAI (`quick_gelu`) and LAION/OpenCLIP (`gelu`) exports load.

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, IndexOp, Module, Tensor};
use candle_nn::{Conv2dConfig, LayerNorm, Linear, VarBuilder};
use image::imageops::FilterType;
use image::RgbImage;
use serde::Deserialize;
use tokenizers::Tokenizer;

use super::{BackendDescriptor, EmbeddingBackend, TokenStates};
use crate::embedding::Embedding;
use crate::error::{Result, VwsdError};

const EOS_TOKEN: &str = "<|endoftext|>";
const BATCH: usize = 16;

fn backend_err(context: &str, e: impl std::fmt::Display) -> VwsdError {
    VwsdError::Backend(format!("{context}: {e}"))
}

fn candle_err(e: candle_core::Error) -> VwsdError {
    backend_err("clip", e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Act {
    QuickGelu,
    Gelu,
}

impl Act {
    fn forward(self, xs: &Tensor) -> candle_core::Result<Tensor> {
        match self {
            Act::QuickGelu => xs * candle_nn::ops::sigmoid(&(xs * 1.702)?)?,
            Act::Gelu => xs.gelu_erf(),
        }
    }
}

fn quick_gelu() -> Act {
    Act::QuickGelu
}
fn eps() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Deserialize)]
struct TextConfig {
    #[serde(default = "d_vocab")]
    vocab_size: usize,
    #[serde(default = "d_512")]
    hidden_size: usize,
    #[serde(default = "d_2048")]
    intermediate_size: usize,
    #[serde(default = "d_12")]
    num_hidden_layers: usize,
    #[serde(default = "d_8")]
    num_attention_heads: usize,
    #[serde(default = "d_77")]
    max_position_embeddings: usize,
    #[serde(default = "quick_gelu")]
    hidden_act: Act,
    #[serde(default = "eps")]
    layer_norm_eps: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct VisionConfig {
    #[serde(default = "d_768")]
    hidden_size: usize,
    #[serde(default = "d_3072")]
    intermediate_size: usize,
    #[serde(default = "d_12")]
    num_hidden_layers: usize,
    #[serde(default = "d_12")]
    num_attention_heads: usize,
    #[serde(default = "d_224")]
    image_size: usize,
    #[serde(default = "d_32")]
    patch_size: usize,
    #[serde(default = "quick_gelu")]
    hidden_act: Act,
    #[serde(default = "eps")]
    layer_norm_eps: f64,
}

fn d_vocab() -> usize {
    49408
}
fn d_8() -> usize {
    8
}
fn d_12() -> usize {
    12
}
fn d_32() -> usize {
    32
}
fn d_77() -> usize {
    77
}
fn d_224() -> usize {
    224
}
fn d_512() -> usize {
    512
}
fn d_768() -> usize {
    768
}
fn d_2048() -> usize {
    2048
}
fn d_3072() -> usize {
    3072
}

#[derive(Debug, Clone, Deserialize)]
struct ModelConfig {
    text_config: TextConfig,
    vision_config: VisionConfig,
}

#[derive(Debug, Clone, Deserialize)]
struct Preprocessor {
    #[serde(default = "default_mean")]
    image_mean: [f32; 3],
    #[serde(default = "default_std")]
    image_std: [f32; 3],
}

fn default_mean() -> [f32; 3] {
    [0.481_454_66, 0.457_827_5, 0.408_210_73]
}
fn default_std() -> [f32; 3] {
    [0.268_629_54, 0.261_302_6, 0.275_777_1]
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            image_mean: default_mean(),
            image_std: default_std(),
        }
    }
}

struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
    scale: f64,
}

impl Attention {
    fn new(vb: VarBuilder, dim: usize, heads: usize) -> candle_core::Result<Self> {
        Ok(Attention {
            q: candle_nn::linear(dim, dim, vb.pp("q_proj"))?,
            k: candle_nn::linear(dim, dim, vb.pp("k_proj"))?,
            v: candle_nn::linear(dim, dim, vb.pp("v_proj"))?,
            out: candle_nn::linear(dim, dim, vb.pp("out_proj"))?,
            heads,
            scale: ((dim / heads) as f64).powf(-0.5),
        })
    }

    fn forward(&self, xs: &Tensor, mask: Option<&Tensor>) -> candle_core::Result<Tensor> {
        let (b, t, d) = xs.dims3()?;
        let hd = d / self.heads;
        let split = |x: Tensor| x.reshape((b, t, self.heads, hd))?.transpose(1, 2)?.contiguous();
        let q = split((self.q.forward(xs)? * self.scale)?)?;
        let k = split(self.k.forward(xs)?)?;
        let v = split(self.v.forward(xs)?)?;
        let mut w = q.matmul(&k.t()?)?;
        if let Some(m) = mask {
            w = w.broadcast_add(m)?;
        }
        let w = candle_nn::ops::softmax_last_dim(&w)?;
        let o = w.matmul(&v)?.transpose(1, 2)?.reshape((b, t, d))?;
        self.out.forward(&o)
    }
}

struct Layer {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    act: Act,
}

impl Layer {
    fn new(vb: VarBuilder, dim: usize, inner: usize, heads: usize, act: Act, eps: f64) -> candle_core::Result<Self> {
        Ok(Layer {
            ln1: candle_nn::layer_norm(dim, eps, vb.pp("layer_norm1"))?,
            attn: Attention::new(vb.pp("self_attn"), dim, heads)?,
            ln2: candle_nn::layer_norm(dim, eps, vb.pp("layer_norm2"))?,
            fc1: candle_nn::linear(dim, inner, vb.pp("mlp").pp("fc1"))?,
            fc2: candle_nn::linear(inner, dim, vb.pp("mlp").pp("fc2"))?,
            act,
        })
    }

    fn forward(&self, xs: &Tensor, mask: Option<&Tensor>) -> candle_core::Result<Tensor> {
        let xs = (xs + self.attn.forward(&self.ln1.forward(xs)?, mask)?)?;
        let h = self.fc2.forward(&self.act.forward(&self.fc1.forward(&self.ln2.forward(&xs)?)?)?)?;
        xs + h
    }
}

fn layers(vb: VarBuilder, n: usize, dim: usize, inner: usize, heads: usize, act: Act, eps: f64) -> candle_core::Result<Vec<Layer>> {
    (0..n)
        .map(|i| Layer::new(vb.pp("encoder").pp("layers").pp(i), dim, inner, heads, act, eps))
        .collect()
}

struct TextTower {
    token_embedding: candle_nn::Embedding,
    position_embedding: Tensor,
    layers: Vec<Layer>,
    final_ln: LayerNorm,
    projection: Linear,
}

impl TextTower {
    fn load(vb: VarBuilder, c: &TextConfig, projection: Linear) -> candle_core::Result<Self> {
        let tm = vb.pp("text_model");
        let emb = tm.pp("embeddings");
        Ok(TextTower {
            token_embedding: candle_nn::embedding(c.vocab_size, c.hidden_size, emb.pp("token_embedding"))?,
            position_embedding: emb.get((c.max_position_embeddings, c.hidden_size), "position_embedding.weight")?,
            layers: layers(
                tm.clone(),
                c.num_hidden_layers,
                c.hidden_size,
                c.intermediate_size,
                c.num_attention_heads,
                c.hidden_act,
                c.layer_norm_eps,
            )?,
            final_ln: candle_nn::layer_norm(c.hidden_size, c.layer_norm_eps, tm.pp("final_layer_norm"))?,
            projection,
        })
    }

    /// Last hidden states, `[batch, len, width]`, after the final norm.
    fn hidden(&self, ids: &Tensor) -> candle_core::Result<Tensor> {
        let (_, t) = ids.dims2()?;
        let xs = self
            .token_embedding
            .forward(ids)?
            .broadcast_add(&self.position_embedding.narrow(0, 0, t)?)?;
        let mask: Vec<f32> = (0..t)
            .flat_map(|i| (0..t).map(move |j| if j > i { f32::NEG_INFINITY } else { 0.0 }))
            .collect();
        let mask = Tensor::from_vec(mask, (t, t), ids.device())?;
        let mut xs = xs;
        for layer in &self.layers {
            xs = layer.forward(&xs, Some(&mask))?;
        }
        self.final_ln.forward(&xs)
    }
}

struct VisionTower {
    class_embedding: Tensor,
    patch_embedding: candle_nn::Conv2d,
    position_embedding: Tensor,
    pre_ln: LayerNorm,
    layers: Vec<Layer>,
    post_ln: LayerNorm,
    projection: Linear,
}

impl VisionTower {
    fn load(vb: VarBuilder, c: &VisionConfig, projection: Linear) -> candle_core::Result<Self> {
        let vm = vb.pp("vision_model");
        let emb = vm.pp("embeddings");
        let grid = c.image_size / c.patch_size;
        let conv = Conv2dConfig {
            stride: c.patch_size,
            ..Default::default()
        };
        Ok(VisionTower {
            class_embedding: emb.get(c.hidden_size, "class_embedding")?,
            patch_embedding: candle_nn::conv2d_no_bias(3, c.hidden_size, c.patch_size, conv, emb.pp("patch_embedding"))?,
            position_embedding: emb.get((grid * grid + 1, c.hidden_size), "position_embedding.weight")?,
            pre_ln: candle_nn::layer_norm(c.hidden_size, c.layer_norm_eps, vm.pp("pre_layrnorm"))?,
            layers: layers(
                vm.clone(),
                c.num_hidden_layers,
                c.hidden_size,
                c.intermediate_size,
                c.num_attention_heads,
                c.hidden_act,
                c.layer_norm_eps,
            )?,
            post_ln: candle_nn::layer_norm(c.hidden_size, c.layer_norm_eps, vm.pp("post_layernorm"))?,
            projection,
        })
    }

    /// Projected class-token features for `[batch, 3, side, side]` pixels.
    fn features(&self, pixels: &Tensor) -> candle_core::Result<Tensor> {
        let b = pixels.dim(0)?;
        let patches = self.patch_embedding.forward(pixels)?.flatten_from(2)?.transpose(1, 2)?;
        let d = self.class_embedding.dim(0)?;
        let cls = self.class_embedding.reshape((1, 1, d))?.broadcast_as((b, 1, d))?;
        let xs = Tensor::cat(&[&cls, &patches], 1)?.broadcast_add(&self.position_embedding)?;
        let mut xs = self.pre_ln.forward(&xs)?;
        for layer in &self.layers {
            xs = layer.forward(&xs, None)?;
        }
        let pooled = self.post_ln.forward(&xs.i((.., 0, ..))?)?;
        self.projection.forward(&pooled)
    }
}

/// A CLIP dual encoder loaded from a local model directory.
pub struct ClipBackend {
    descriptor: BackendDescriptor,
    tokenizer: Tokenizer,
    eos_id: u32,
    text: TextTower,
    vision: VisionTower,
    preprocess: Preprocessor,
    device: Device,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).map_err(|e| VwsdError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&body).map_err(|e| backend_err(&path.display().to_string(), e))
}

impl ClipBackend {
    /// Loads the model in `dir`. `name` defaults to the directory name.
    pub fn load(dir: &Path, name: Option<&str>) -> Result<Self> {
        let config: ModelConfig = read_json(&dir.join("config.json"))?;
        let pre_path = dir.join("preprocessor_config.json");
        let preprocess = if pre_path.is_file() {
            read_json(&pre_path)?
        } else {
            Preprocessor::default()
        };
        let tok_path = dir.join("tokenizer.json");
        let tokenizer = Tokenizer::from_file(&tok_path).map_err(|e| backend_err(&tok_path.display().to_string(), e))?;
        let eos_id = tokenizer
            .token_to_id(EOS_TOKEN)
            .ok_or_else(|| backend_err("tokenizer", format!("missing {EOS_TOKEN}")))?;

        let weights: PathBuf = dir.join("model.safetensors");
        if !weights.is_file() {
            return Err(VwsdError::Backend(format!("{} not found", weights.display())));
        }
        let device = Device::Cpu;
        // SAFETY: the file is only read; concurrent modification is the caller's problem, as with any mmap.
        let vb = unsafe { VarBuilder::from_mmaped_safetensors(&[weights], DType::F32, &device) }.map_err(candle_err)?;
        let (tc, vc) = (&config.text_config, &config.vision_config);
        let proj_dim = vb
            .get_unchecked("text_projection.weight")
            .and_then(|t| t.dim(0))
            .map_err(candle_err)?;
        let text_proj = candle_nn::linear_no_bias(tc.hidden_size, proj_dim, vb.pp("text_projection")).map_err(candle_err)?;
        let vis_proj = candle_nn::linear_no_bias(vc.hidden_size, proj_dim, vb.pp("visual_projection")).map_err(candle_err)?;
        let text = TextTower::load(vb.clone(), tc, text_proj).map_err(candle_err)?;
        let vision = VisionTower::load(vb, vc, vis_proj).map_err(candle_err)?;

        let name = name.map(str::to_string).unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "clip".into())
        });
        Ok(ClipBackend {
            descriptor: BackendDescriptor {
                name,
                embedding_dim: proj_dim,
                text_context_limit: tc.max_position_embeddings,
                image_resolution: vc.image_size as u32,
            },
            tokenizer,
            eos_id,
            text,
            vision,
            preprocess,
            device,
        })
    }

    /// Token ids with start and end markers, truncated so the end marker
    /// survives.
    pub fn token_ids(&self, text: &str) -> Result<Vec<u32>> {
        let enc = self.tokenizer.encode(text, true).map_err(|e| backend_err("tokenizing", e))?;
        let mut ids = enc.get_ids().to_vec();
        let limit = self.descriptor.text_context_limit;
        if ids.len() > limit {
            ids.truncate(limit - 1);
            ids.push(self.eos_id);
        }
        Ok(ids)
    }

    fn eos_position(&self, ids: &[u32]) -> usize {
        ids.iter().position(|&i| i == self.eos_id).unwrap_or(ids.len() - 1)
    }

    fn text_features(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let seqs = texts.iter().map(|t| self.token_ids(t)).collect::<Result<Vec<_>>>()?;
        let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
        // right padding is invisible to earlier positions under the causal mask
        let flat: Vec<u32> = seqs
            .iter()
            .flat_map(|s| s.iter().copied().chain(std::iter::repeat(self.eos_id)).take(len))
            .collect();
        let ids = Tensor::from_vec(flat, (seqs.len(), len), &self.device).map_err(candle_err)?;
        let hidden = self.text.hidden(&ids).map_err(candle_err)?;
        let pooled: Vec<Tensor> = seqs
            .iter()
            .enumerate()
            .map(|(b, s)| hidden.i((b, self.eos_position(s))))
            .collect::<candle_core::Result<_>>()
            .map_err(candle_err)?;
        let pooled = Tensor::stack(&pooled, 0).map_err(candle_err)?;
        let feats = self.text.projection.forward(&pooled).map_err(candle_err)?;
        rows_to_unit(&feats, "text embedding")
    }

    /// Square crop at the model's resolution: shortest edge resized with a
    /// bicubic filter, then center-cropped.
    pub fn prepare(&self, image: &RgbImage) -> RgbImage {
        let side = self.descriptor.image_resolution;
        let (w, h) = image.dimensions();
        if w == side && h == side {
            return image.clone();
        }
        let scale = side as f64 / w.min(h) as f64;
        let nw = ((w as f64 * scale).round() as u32).max(side);
        let nh = ((h as f64 * scale).round() as u32).max(side);
        let resized = image::imageops::resize(image, nw, nh, FilterType::CatmullRom);
        image::imageops::crop_imm(&resized, (nw - side) / 2, (nh - side) / 2, side, side).to_image()
    }

    fn pixel_tensor(&self, images: &[RgbImage]) -> Result<Tensor> {
        let side = self.descriptor.image_resolution as usize;
        let plane = side * side;
        let mut data = vec![0f32; images.len() * 3 * plane];
        for (b, img) in images.iter().enumerate() {
            let img = self.prepare(img);
            for (p, px) in img.pixels().enumerate() {
                for c in 0..3 {
                    let v = px[c] as f32 / 255.0;
                    data[(b * 3 + c) * plane + p] = (v - self.preprocess.image_mean[c]) / self.preprocess.image_std[c];
                }
            }
        }
        Tensor::from_vec(data, (images.len(), 3, side, side), &self.device).map_err(candle_err)
    }

    fn image_features(&self, images: &[RgbImage]) -> Result<Vec<Embedding>> {
        let pixels = self.pixel_tensor(images)?;
        let feats = self.vision.features(&pixels).map_err(candle_err)?;
        rows_to_unit(&feats, "image embedding")
    }
}

fn rows_to_unit(t: &Tensor, what: &'static str) -> Result<Vec<Embedding>> {
    let rows: Vec<Vec<f32>> = t.to_dtype(DType::F32).and_then(|t| t.to_vec2()).map_err(candle_err)?;
    rows.into_iter()
        .map(|r| Embedding::from_raw(r.into_iter().map(f64::from).collect()).normalize(what))
        .collect()
}

fn batched<T>(items: &[T], f: impl Fn(&[T]) -> Result<Vec<Embedding>>) -> Result<Vec<Embedding>> {
    let mut out = Vec::with_capacity(items.len());
    for (k, chunk) in items.chunks(BATCH).enumerate() {
        out.extend(f(chunk).map_err(|e| VwsdError::Batch {
            index: k * BATCH,
            source: Box::new(e),
        })?);
    }
    Ok(out)
}

impl EmbeddingBackend for ClipBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(VwsdError::EmptyInput("text"));
        }
        Ok(self.text_features(&[text.to_string()])?.remove(0))
    }

    fn encode_image(&self, image: &RgbImage) -> Result<Embedding> {
        Ok(self.image_features(std::slice::from_ref(image))?.remove(0))
    }

    /// Last-layer states passed through the text projection, so pooled
    /// spans live in the shared space.
    fn token_states(&self, text: &str) -> Result<TokenStates> {
        let ids = self.token_ids(text)?;
        let tokens = ids
            .iter()
            .map(|&i| self.tokenizer.id_to_token(i).unwrap_or_default())
            .collect();
        let t = Tensor::from_vec(ids.clone(), (1, ids.len()), &self.device).map_err(candle_err)?;
        let hidden = self.text.hidden(&t).and_then(|h| h.i(0)).map_err(candle_err)?;
        let projected = self.text.projection.forward(&hidden).map_err(candle_err)?;
        let states: Vec<Vec<f32>> = projected.to_vec2().map_err(candle_err)?;
        Ok(TokenStates {
            tokens,
            states: states
                .into_iter()
                .map(|r| r.into_iter().map(f64::from).collect())
                .collect(),
        })
    }

    fn encode_text_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(VwsdError::Batch {
                index: i,
                source: Box::new(VwsdError::EmptyInput("text")),
            });
        }
        batched(texts, |c| self.text_features(c))
    }

    fn encode_image_batch(&self, images: &[RgbImage]) -> Result<Vec<Embedding>> {
        batched(images, |c| self.image_features(c))
    }
}
