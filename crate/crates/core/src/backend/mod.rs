//! Text and image encoders that map into a shared embedding space.
//!
//! [`EmbeddingBackend`] is the seam between the pipeline and a concrete
//! vision-language model. [`MockBackend`] is a weight-free, fully
//! deterministic implementation used by tests and the synthetic fixtures.
//! `ClipBackend` (feature `clip`) runs real CLIP checkpoints.

#[cfg(feature = "clip")]
mod clip;
mod mock;

use std::ops::Range;
use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::embedding::{self, Embedding};
use crate::error::{Result, VwsdError};

#[cfg(feature = "clip")]
pub use clip::ClipBackend;
pub use mock::{stable_hash, MockBackend, MockConfig};

/// Static facts about a backend instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub embedding_dim: usize,
    /// Maximum number of text tokens the encoder accepts.
    pub text_context_limit: usize,
    /// Square input side length in pixels.
    pub image_resolution: u32,
}

impl BackendDescriptor {
    /// Descriptor shared by CLIP-family checkpoints.
    pub fn clip(name: impl Into<String>, embedding_dim: usize) -> Self {
        BackendDescriptor {
            name: name.into(),
            embedding_dim,
            text_context_limit: 77,
            image_resolution: 224,
        }
    }
}

/// Per-token hidden states of the text encoder's last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStates {
    pub tokens: Vec<String>,
    pub states: Vec<Vec<f64>>,
}

/// A text/image encoder producing unit-norm embeddings.
///
/// Implementations are read-only after construction and must be safe to
/// call from several threads at once.
pub trait EmbeddingBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Whole-text embedding (end-of-sequence pooling for CLIP-style models).
    fn encode_text(&self, text: &str) -> Result<Embedding>;

    fn encode_image(&self, image: &RgbImage) -> Result<Embedding>;

    /// Last-layer hidden states for every token. Optional capability.
    fn token_states(&self, _text: &str) -> Result<TokenStates> {
        Err(VwsdError::Unsupported {
            backend: self.descriptor().name.clone(),
            capability: "token hidden states",
        })
    }

    /// Token index range covering `target` inside `text`.
    fn locate_target(&self, text: &str, target: &str) -> Result<Range<usize>> {
        let states = self.token_states(text)?;
        find_token_span(&states.tokens, target).ok_or(VwsdError::InvalidSpan {
            start: 0,
            end: 0,
            len: states.tokens.len(),
        })
    }

    /// Mean of the hidden states in `span`, L2-normalized.
    fn encode_text_target(&self, text: &str, span: Range<usize>) -> Result<Embedding> {
        let states = self.token_states(text)?;
        let len = states.states.len();
        if span.is_empty() || span.end > len {
            return Err(VwsdError::InvalidSpan {
                start: span.start,
                end: span.end,
                len,
            });
        }
        let rows: Vec<Embedding> = states.states[span]
            .iter()
            .map(|s| Embedding::from_raw(s.clone()))
            .collect();
        embedding::mean(&rows)?.normalize("target token pooling")
    }

    fn encode_text_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.encode_text(t).map_err(|e| VwsdError::Batch {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    fn encode_image_batch(&self, images: &[RgbImage]) -> Result<Vec<Embedding>> {
        images
            .iter()
            .enumerate()
            .map(|(index, img)| {
                self.encode_image(img).map_err(|e| VwsdError::Batch {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

fn strip_subword_marks(token: &str) -> &str {
    token
        .trim_end_matches("</w>")
        .trim_start_matches("##")
        .trim_start_matches('\u{0120}')
}

/// Finds the first run of tokens whose concatenation (ignoring subword
/// markers and case) spells `target` with its spaces removed.
pub fn find_token_span(tokens: &[String], target: &str) -> Option<Range<usize>> {
    let wanted: String = target
        .split_whitespace()
        .collect::<String>()
        .to_lowercase();
    if wanted.is_empty() {
        return None;
    }
    for start in 0..tokens.len() {
        let mut acc = String::new();
        for (end, tok) in tokens.iter().enumerate().skip(start) {
            acc.push_str(&strip_subword_marks(tok).to_lowercase());
            if acc == wanted {
                return Some(start..end + 1);
            }
            if !wanted.starts_with(&acc) {
                break;
            }
        }
    }
    None
}

/// Resizes to a `side x side` square unless the image already has that shape.
pub fn resize_square(image: &RgbImage, side: u32, filter: FilterType) -> RgbImage {
    if image.width() == side && image.height() == side {
        image.clone()
    } else {
        image::imageops::resize(image, side, side, filter)
    }
}

/// Decodes an image file into an RGB raster.
pub fn decode_image(path: &Path) -> Result<RgbImage> {
    let reference = path.display().to_string();
    let img = image::ImageReader::open(path)
        .map_err(|e| VwsdError::image(&reference, e))?
        .with_guessed_format()
        .map_err(|e| VwsdError::image(&reference, e))?
        .decode()
        .map_err(|e| VwsdError::image(&reference, e))?;
    Ok(img.to_rgb8())
}
