//! Dual-channel prompt ensembles.
//!
//! A sample's target word and context are expanded into a *semantic*
//! channel (short descriptions of the sense) and a *photo* channel
//! (photo-like captions, optionally extended with synonym captions). Each
//! channel is encoded and mean-pooled, and the two channels are fused by a
//! weighted sum into one enriched text embedding.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::EmbeddingBackend;
use crate::embedding::{self, weighted_sum, Embedding};
use crate::error::{Result, VwsdError};
use crate::translate::Translator;

pub const DEFAULT_SEMANTIC_TEMPLATES: &[&str] = &[
    "{t} related to {c}",
    "the concept of {t} in {c}",
    "{t} in the context of {c}",
];

pub const DEFAULT_PHOTO_TEMPLATES: &[&str] = &[
    "a photo of {t} {c}",
    "{t} with {c}, natural scene",
    "{t} appearing in a {c} environment",
];

pub const DEFAULT_SYNONYM_TEMPLATES: &[&str] = &["a photo of {t_syn} {c_syn}"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Semantic,
    Photo,
    SynonymPhoto,
}

impl Channel {
    fn label(self) -> &'static str {
        match self {
            Channel::Semantic => "semantic",
            Channel::Photo => "photo",
            Channel::SynonymPhoto => "synonym_photo",
        }
    }
}

/// Ordered template lists for each channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub semantic: Vec<String>,
    pub photo: Vec<String>,
    pub synonym_photo: Vec<String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let owned = |ts: &[&str]| ts.iter().map(|t| t.to_string()).collect();
        TemplateSet {
            semantic: owned(DEFAULT_SEMANTIC_TEMPLATES),
            photo: owned(DEFAULT_PHOTO_TEMPLATES),
            synonym_photo: owned(DEFAULT_SYNONYM_TEMPLATES),
        }
    }
}

impl TemplateSet {
    pub fn validate(&self) -> Result<()> {
        let check = |list: &[String], channel: Channel, required: &str| -> Result<()> {
            if list.is_empty() && channel != Channel::SynonymPhoto {
                return Err(VwsdError::Config(format!(
                    "{} template list is empty",
                    channel.label()
                )));
            }
            match list.iter().find(|t| !t.contains(required)) {
                Some(t) => Err(VwsdError::Config(format!(
                    "{} template `{t}` lacks the {required} placeholder",
                    channel.label()
                ))),
                None => Ok(()),
            }
        };
        check(&self.semantic, Channel::Semantic, "{t}")?;
        check(&self.photo, Channel::Photo, "{t}")?;
        check(&self.synonym_photo, Channel::SynonymPhoto, "{t_syn}")
    }
}

/// Reads one template per line, skipping blank lines.
pub fn load_templates(path: &Path) -> Result<Vec<String>> {
    let body = fs::read_to_string(path)
        .map_err(|e| VwsdError::io(format!("reading {}", path.display()), e))?;
    Ok(body
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

fn starts_with_vowel(s: &str) -> bool {
    s.chars()
        .next()
        .is_some_and(|c| matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u'))
}

/// Substitutes `{t}`, `{c}`, `{t_syn}` and `{c_syn}`. A standalone article
/// `a` directly before a placeholder becomes `an` when the substituted word
/// starts with a vowel.
pub fn instantiate(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}').map(|c| open + c) else {
            break;
        };
        let name = &rest[open + 1..close];
        let Some((_, value)) = slots.iter().find(|(k, _)| *k == name) else {
            out.push_str(&rest[..=close]);
            rest = &rest[close + 1..];
            continue;
        };
        out.push_str(&rest[..open]);
        let bare_article =
            out.ends_with(" a ") || out == "a " || out.ends_with("\ta ");
        if bare_article && starts_with_vowel(value) {
            out.truncate(out.len() - 1);
            out.push_str("n ");
        }
        out.push_str(value);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

/// One generated prompt and the template it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub channel: Channel,
    pub template_index: usize,
}

impl Prompt {
    pub fn template_id(&self) -> String {
        format!("{}/{}", self.channel.label(), self.template_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub semantic: Vec<Prompt>,
    pub photo: Vec<Prompt>,
    pub synonym_photo: Vec<Prompt>,
}

impl PromptBundle {
    pub fn semantic_texts(&self) -> Vec<String> {
        self.semantic.iter().map(|p| p.text.clone()).collect()
    }

    /// Photo-channel texts: base photo prompts followed by synonym prompts.
    pub fn photo_texts(&self) -> Vec<String> {
        self.photo
            .iter()
            .chain(&self.synonym_photo)
            .map(|p| p.text.clone())
            .collect()
    }
}

fn expand(templates: &[String], channel: Channel, slots: &[(&str, &str)]) -> Vec<Prompt> {
    templates
        .iter()
        .enumerate()
        .map(|(template_index, t)| Prompt {
            text: instantiate(t, slots),
            channel,
            template_index,
        })
        .collect()
}

fn require_nonempty(target: &str, context: &str) -> Result<()> {
    if target.trim().is_empty() {
        return Err(VwsdError::EmptyInput("prompt target"));
    }
    if context.trim().is_empty() {
        return Err(VwsdError::EmptyInput("prompt context"));
    }
    Ok(())
}

pub fn build_semantic_prompts(
    target: &str,
    context: &str,
    templates: &TemplateSet,
) -> Result<Vec<String>> {
    require_nonempty(target, context)?;
    Ok(expand(&templates.semantic, Channel::Semantic, &[("t", target), ("c", context)])
        .into_iter()
        .map(|p| p.text)
        .collect())
}

/// Photo prompts, extended with synonym prompts when `synonyms` is
/// `(target_synonym, context_synonym)`.
pub fn build_photo_prompts(
    target: &str,
    context: &str,
    synonyms: Option<(&str, &str)>,
    templates: &TemplateSet,
) -> Result<Vec<String>> {
    Ok(build_bundle(target, context, synonyms, templates)?.photo_texts())
}

pub fn build_bundle(
    target: &str,
    context: &str,
    synonyms: Option<(&str, &str)>,
    templates: &TemplateSet,
) -> Result<PromptBundle> {
    require_nonempty(target, context)?;
    let slots = [("t", target), ("c", context)];
    let synonym_photo = match synonyms {
        Some((ts, cs)) => {
            let slots = [("t", target), ("c", context), ("t_syn", ts), ("c_syn", cs)];
            expand(&templates.synonym_photo, Channel::SynonymPhoto, &slots)
        }
        None => Vec::new(),
    };
    Ok(PromptBundle {
        semantic: expand(&templates.semantic, Channel::Semantic, &slots),
        photo: expand(&templates.photo, Channel::Photo, &slots),
        synonym_photo,
    })
}

/// Encodes every prompt, averages the unit vectors and normalizes the mean.
pub fn channel_embedding(prompts: &[String], backend: &dyn EmbeddingBackend) -> Result<Embedding> {
    if prompts.is_empty() {
        return Err(VwsdError::EmptyInput("prompt channel"));
    }
    let encoded = backend.encode_text_batch(prompts)?;
    embedding::mean(&encoded)?.normalize("channel mean")
}

/// Weights of the photo and semantic channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub beta_p: f64,
    pub beta_s: f64,
}

impl FusionWeights {
    pub fn new(beta_p: f64, beta_s: f64) -> Result<Self> {
        let w = FusionWeights { beta_p, beta_s };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.beta_p) || !in_unit(self.beta_s) {
            return Err(VwsdError::Config(format!(
                "fusion weights must lie in [0, 1], got beta_p={} beta_s={}",
                self.beta_p, self.beta_s
            )));
        }
        if self.beta_p + self.beta_s <= 0.0 {
            return Err(VwsdError::Config("beta_p + beta_s must be positive".into()));
        }
        Ok(())
    }
}

/// `normalize(beta_p * h_p + beta_s * h_s)`.
pub fn fuse_channels(h_p: &Embedding, h_s: &Embedding, w: FusionWeights) -> Result<Embedding> {
    w.validate()?;
    weighted_sum(h_p, w.beta_p, h_s, w.beta_s)?
        .normalize("channel fusion")
        .map_err(|_| VwsdError::Degenerate("channel fusion"))
}

/// Channel embedding pooled over the English prompts and their translations
/// into each language. A language whose translation fails is skipped.
pub fn multilingual_channel_embedding(
    prompts: &[String],
    languages: &[String],
    translator: &dyn Translator,
    backend: &dyn EmbeddingBackend,
) -> Result<Embedding> {
    if prompts.is_empty() {
        return Err(VwsdError::EmptyInput("prompt channel"));
    }
    let mut texts = prompts.to_vec();
    for language in languages {
        let translated: Result<Vec<String>> = prompts
            .iter()
            .map(|p| translator.translate(p, language))
            .collect();
        match translated {
            Ok(t) => texts.extend(t),
            Err(e) => log::warn!("skipping language `{language}`: {e}"),
        }
    }
    channel_embedding(&texts, backend)
}
