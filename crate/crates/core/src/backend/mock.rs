use std::collections::HashMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use image::imageops::FilterType;
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{decode_image, resize_square, BackendDescriptor, EmbeddingBackend, TokenStates};
use crate::embedding::{weighted_sum, Embedding};
use crate::error::{Result, VwsdError};

const TEXT_DOMAIN: &[u8] = b"text";
const TOKEN_DOMAIN: &[u8] = b"token";
const IMAGE_DOMAIN: &[u8] = b"image";

/// FNV-1a over `key || domain || 0x00 || bytes`. Stable across platforms and
/// toolchains.
pub fn stable_hash(key: u64, domain: &[u8], bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&key.to_le_bytes());
    h.write(domain);
    h.write(&[0]);
    h.write(bytes);
    h.finish()
}

fn seeded_unit(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| v / norm).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub dim: usize,
    pub image_resolution: u32,
    pub text_context_limit: usize,
    pub key: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            dim: 512,
            image_resolution: 224,
            text_context_limit: 77,
            key: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Anchor {
    text: String,
    weight: f64,
}

/// Deterministic stand-in encoder.
///
/// Text maps to a pseudo-random unit vector seeded by a stable hash of the
/// (truncated) string; images map to one seeded by the hash of their pixel
/// bytes after resizing to the descriptor resolution. Whitespace words play
/// the role of tokens.
///
/// Images can be anchored to a text: an anchored image encodes as the
/// normalized blend `w * encode_text(text) + (1 - w) * pixel_vector`. This
/// lets synthetic datasets carry a controllable amount of signal.
#[derive(Debug, Clone)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    key: u64,
    anchors: HashMap<u64, Anchor>,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        MockBackend {
            descriptor: BackendDescriptor {
                name: "mock".into(),
                embedding_dim: config.dim,
                text_context_limit: config.text_context_limit,
                image_resolution: config.image_resolution,
            },
            key: config.key,
            anchors: HashMap::new(),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Canonical pixel bytes for `image`: RGB bytes after resizing.
    pub fn canonical_pixels(&self, image: &RgbImage) -> RgbImage {
        resize_square(image, self.descriptor.image_resolution, FilterType::Triangle)
    }

    fn pixel_hash(&self, image: &RgbImage) -> u64 {
        stable_hash(self.key, IMAGE_DOMAIN, self.canonical_pixels(image).as_raw())
    }

    pub fn add_anchor(&mut self, image: &RgbImage, text: &str, weight: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(VwsdError::Config(format!(
                "anchor weight must lie in [0, 1], got {weight}"
            )));
        }
        let hash = self.pixel_hash(image);
        self.anchors.insert(
            hash,
            Anchor {
                text: text.to_string(),
                weight,
            },
        );
        Ok(())
    }

    /// Reads `image<TAB>text<TAB>weight` lines; image paths are relative to
    /// `image_root`.
    pub fn load_anchors(&mut self, path: &Path, image_root: &Path) -> Result<usize> {
        let body = fs::read_to_string(path)
            .map_err(|e| VwsdError::io(format!("reading {}", path.display()), e))?;
        let mut count = 0;
        for (idx, line) in body.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| VwsdError::Dataset {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected image, text and weight".into()));
            }
            let weight: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad weight `{}`", fields[2])))?;
            let image = decode_image(&image_root.join(fields[0]))?;
            self.add_anchor(&image, fields[1], weight)?;
            count += 1;
        }
        Ok(count)
    }

    fn truncated_tokens<'a>(&self, text: &'a str) -> Result<Vec<&'a str>> {
        let mut tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(VwsdError::EmptyInput("text to encode"));
        }
        let limit = self.descriptor.text_context_limit;
        if tokens.len() > limit {
            log::warn!(
                "text of {} tokens truncated to the {limit}-token context limit",
                tokens.len()
            );
            tokens.truncate(limit);
        }
        Ok(tokens)
    }
}

impl EmbeddingBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        let canonical = self.truncated_tokens(text)?.join(" ");
        let seed = stable_hash(self.key, TEXT_DOMAIN, canonical.as_bytes());
        Embedding::unit(seeded_unit(seed, self.descriptor.embedding_dim), "mock text")
    }

    fn encode_image(&self, image: &RgbImage) -> Result<Embedding> {
        if image.width() == 0 || image.height() == 0 {
            return Err(VwsdError::image("<raster>", "empty image"));
        }
        let hash = self.pixel_hash(image);
        let base = Embedding::unit(seeded_unit(hash, self.descriptor.embedding_dim), "mock image")?;
        match self.anchors.get(&hash) {
            None => Ok(base),
            Some(anchor) => {
                let text = self.encode_text(&anchor.text)?;
                weighted_sum(&text, anchor.weight, &base, 1.0 - anchor.weight)?
                    .normalize("anchored mock image")
            }
        }
    }

    fn token_states(&self, text: &str) -> Result<TokenStates> {
        let tokens = self.truncated_tokens(text)?;
        let canonical = tokens.join(" ");
        let states = (0..tokens.len())
            .map(|i| {
                let mut bytes = canonical.as_bytes().to_vec();
                bytes.push(0);
                bytes.extend_from_slice(&(i as u64).to_le_bytes());
                seeded_unit(
                    stable_hash(self.key, TOKEN_DOMAIN, &bytes),
                    self.descriptor.embedding_dim,
                )
            })
            .collect();
        Ok(TokenStates {
            tokens: tokens.into_iter().map(str::to_string).collect(),
            states,
        })
    }
}
