//! The per-query pipeline: text enrichment, image enrichment and ranking.

use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::augment::{aggregate_image_embedding, generate_views, AugmentationProfile, ViewSet};
use crate::backend::EmbeddingBackend;
use crate::dataset::context_without_target;
use crate::embedding::Embedding;
use crate::error::{Result, VwsdError};
use crate::lexicon::{
    blend_definition, candidate_definitions, lookup_synonym, select_definition, LexicalResource,
    DEFAULT_SYNONYM_COUNT,
};
use crate::prompts::{
    build_bundle, channel_embedding, fuse_channels, multilingual_channel_embedding, FusionWeights,
    PromptBundle, TemplateSet,
};
use crate::ranker::{rank_candidates, RankingResult};
use crate::translate::Translator;

/// How the un-prompted phrase is embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Whole-text embedding.
    Sentence,
    /// Mean of the target word's token states; falls back to `Sentence`
    /// on backends without hidden-state access.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelsEnabled {
    pub semantic: bool,
    pub photo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitionStage {
    pub enabled: bool,
    pub alpha: f64,
    pub include_synonyms: bool,
    pub synonym_count: usize,
}

impl Default for DefinitionStage {
    fn default() -> Self {
        DefinitionStage {
            enabled: false,
            alpha: 0.15,
            include_synonyms: false,
            synonym_count: DEFAULT_SYNONYM_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TranslationStage {
    pub enabled: bool,
    pub languages: Vec<String>,
}

/// Everything that determines a run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub backend: String,
    /// When false the raw context phrase is the only text.
    pub prompting: bool,
    pub channels: ChannelsEnabled,
    /// Extra photo prompts built from lexicon synonyms.
    pub synonym_prompts: bool,
    pub fusion: FusionWeights,
    pub templates: TemplateSet,
    pub pooling: Pooling,
    pub augmentation: AugmentationProfile,
    pub tau: f64,
    pub definitions: DefinitionStage,
    pub translation: TranslationStage,
    pub workers: usize,
    /// Record latency statistics. Off makes reports byte-reproducible.
    pub timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            backend: "mock".into(),
            prompting: true,
            channels: ChannelsEnabled {
                semantic: true,
                photo: true,
            },
            synonym_prompts: false,
            fusion: FusionWeights {
                beta_p: 0.6,
                beta_s: 0.4,
            },
            templates: TemplateSet::default(),
            pooling: Pooling::Sentence,
            augmentation: AugmentationProfile::default(),
            tau: 0.7,
            definitions: DefinitionStage::default(),
            translation: TranslationStage::default(),
            workers: 1,
            timing: true,
        }
    }
}

impl PipelineConfig {
    /// Raw phrase against single-view images.
    pub fn vanilla() -> Self {
        PipelineConfig {
            prompting: false,
            augmentation: AugmentationProfile::single_view(),
            tau: 1.0,
            ..PipelineConfig::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.augmentation.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.augmentation.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompting && !self.channels.semantic && !self.channels.photo {
            return Err(VwsdError::Config("at least one text channel must be enabled".into()));
        }
        self.fusion.validate()?;
        self.templates.validate()?;
        self.augmentation.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(VwsdError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.definitions.alpha) {
            return Err(VwsdError::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.definitions.alpha
            )));
        }
        if self.workers == 0 {
            return Err(VwsdError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Optional external resources a configuration may need.
#[derive(Clone, Default)]
pub struct Resources {
    pub lexicon: Option<Arc<dyn LexicalResource>>,
    pub translator: Option<Arc<dyn Translator>>,
}

impl Resources {
    pub fn check(&self, config: &PipelineConfig) -> Result<()> {
        let needs_lexicon =
            config.definitions.enabled || (config.prompting && config.synonym_prompts);
        if needs_lexicon && self.lexicon.is_none() {
            return Err(VwsdError::Config(
                "configuration needs a lexicon but none was provided".into(),
            ));
        }
        if config.translation.enabled && self.translator.is_none() {
            return Err(VwsdError::Config(
                "translation is enabled but no translator was provided".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub embedding: Embedding,
    pub prompts: Option<PromptBundle>,
    /// Index of the gloss blended in, when the definition stage ran.
    pub definition: Option<usize>,
}

fn pool_channel(
    texts: &[String],
    config: &PipelineConfig,
    backend: &dyn EmbeddingBackend,
    resources: &Resources,
) -> Result<Embedding> {
    match (&config.translation, &resources.translator) {
        (t, Some(translator)) if t.enabled => {
            multilingual_channel_embedding(texts, &t.languages, translator.as_ref(), backend)
        }
        _ => channel_embedding(texts, backend),
    }
}

fn synonym_pair(lexicon: &dyn LexicalResource, target: &str, context: &str) -> Option<(String, String)> {
    let ts = lookup_synonym(lexicon, target);
    let cs = lookup_synonym(lexicon, context);
    match (ts, cs) {
        (None, None) => None,
        (ts, cs) => Some((
            ts.unwrap_or_else(|| target.to_string()),
            cs.unwrap_or_else(|| context.to_string()),
        )),
    }
}

/// The (enriched) text embedding for one target word in context.
pub fn text_embedding(
    target: &str,
    phrase: &str,
    config: &PipelineConfig,
    backend: &dyn EmbeddingBackend,
    resources: &Resources,
) -> Result<TextEmbedding> {
    let (mut embedding, prompts) = if config.prompting {
        let context = context_without_target(target, phrase);
        let synonyms = match (&resources.lexicon, config.synonym_prompts) {
            (Some(lex), true) => synonym_pair(lex.as_ref(), target, &context),
            _ => None,
        };
        let bundle = build_bundle(
            target,
            &context,
            synonyms.as_ref().map(|(a, b)| (a.as_str(), b.as_str())),
            &config.templates,
        )?;
        let h_s = config
            .channels
            .semantic
            .then(|| pool_channel(&bundle.semantic_texts(), config, backend, resources))
            .transpose()?;
        let h_p = config
            .channels
            .photo
            .then(|| pool_channel(&bundle.photo_texts(), config, backend, resources))
            .transpose()?;
        let fused = match (h_p, h_s) {
            (Some(p), Some(s)) => fuse_channels(&p, &s, config.fusion)?,
            (Some(p), None) => p,
            (None, Some(s)) => s,
            (None, None) => {
                return Err(VwsdError::Config("no text channel enabled".into()));
            }
        };
        (fused, Some(bundle))
    } else {
        let e = match config.pooling {
            Pooling::Target => contextual_target_embedding(target, phrase, backend)?,
            Pooling::Sentence if config.translation.enabled => {
                pool_channel(&[phrase.to_string()], config, backend, resources)?
            }
            Pooling::Sentence => backend.encode_text(phrase)?,
        };
        (e, None)
    };

    let mut definition = None;
    if config.definitions.enabled {
        let lexicon = resources
            .lexicon
            .as_ref()
            .ok_or_else(|| VwsdError::Config("definition stage needs a lexicon".into()))?;
        match candidate_definitions(
            lexicon.as_ref(),
            target,
            config.definitions.include_synonyms,
            config.definitions.synonym_count,
        ) {
            Ok(defs) => {
                let (idx, h_d) = select_definition(&embedding, &defs, backend)?;
                embedding = blend_definition(&h_d, &embedding, config.definitions.alpha)?;
                definition = Some(idx);
            }
            Err(VwsdError::NoDefinitions(word)) => {
                log::debug!("no definitions for `{word}`, keeping the contextual embedding");
            }
            Err(e) => return Err(e),
        }
    }

    Ok(TextEmbedding {
        embedding,
        prompts,
        definition,
    })
}

fn contextual_target_embedding(
    target: &str,
    phrase: &str,
    backend: &dyn EmbeddingBackend,
) -> Result<Embedding> {
    let pooled = backend
        .locate_target(phrase, target)
        .and_then(|span| backend.encode_text_target(phrase, span));
    match pooled {
        Ok(e) => Ok(e),
        Err(VwsdError::Unsupported { .. }) | Err(VwsdError::InvalidSpan { .. }) => {
            log::debug!("target pooling unavailable for `{phrase}`, using the sentence embedding");
            backend.encode_text(phrase)
        }
        Err(e) => Err(e),
    }
}

/// The views of `image` under the configured profile, at the backend's
/// input resolution.
pub fn generate_image_views(
    image: &RgbImage,
    image_key: &str,
    config: &PipelineConfig,
    backend: &dyn EmbeddingBackend,
) -> Result<ViewSet> {
    let resolution = backend.descriptor().image_resolution;
    generate_views(image, &config.augmentation, image_key, resolution)
}

/// Enriched embedding of one candidate image.
pub fn image_embedding(
    image: &RgbImage,
    image_key: &str,
    config: &PipelineConfig,
    backend: &dyn EmbeddingBackend,
) -> Result<Embedding> {
    let views = generate_image_views(image, image_key, config, backend)?;
    aggregate_image_embedding(&views, backend, config.tau)
}

/// Ranks decoded candidate images for one query.
pub fn predict(
    target: &str,
    phrase: &str,
    images: &[(String, RgbImage)],
    config: &PipelineConfig,
    backend: &dyn EmbeddingBackend,
    resources: &Resources,
) -> Result<RankingResult> {
    config.validate()?;
    resources.check(config)?;
    let text = text_embedding(target, phrase, config, backend, resources)?;
    let image_embs = images
        .iter()
        .map(|(key, img)| image_embedding(img, key, config, backend))
        .collect::<Result<Vec<_>>>()?;
    rank_candidates(&text.embedding, &image_embs, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockConfig};
    use crate::lexicon::FixtureLexicon;

    fn backend() -> MockBackend {
        MockBackend::new(MockConfig {
            dim: 64,
            image_resolution: 32,
            ..MockConfig::default()
        })
    }

    #[test]
    fn vanilla_text_is_phrase_embedding() {
        let b = backend();
        let t = text_embedding("bank", "bank erosion", &PipelineConfig::vanilla(), &b, &Resources::default())
            .unwrap();
        assert_eq!(t.embedding, b.encode_text("bank erosion").unwrap());
        assert!(t.prompts.is_none());
    }

    #[test]
    fn target_pooling_uses_token_states() {
        let b = backend();
        let config = PipelineConfig {
            pooling: Pooling::Target,
            ..PipelineConfig::vanilla()
        };
        let t = text_embedding("router", "internet router", &config, &b, &Resources::default()).unwrap();
        let expected = b.encode_text_target("internet router", 1..2).unwrap();
        assert_eq!(t.embedding, expected);
    }

    #[test]
    fn single_channel_skips_fusion() {
        let b = backend();
        let config = PipelineConfig {
            channels: ChannelsEnabled {
                semantic: true,
                photo: false,
            },
            ..PipelineConfig::default()
        };
        let t = text_embedding("bank", "bank erosion", &config, &b, &Resources::default()).unwrap();
        let semantic = t.prompts.as_ref().unwrap().semantic_texts();
        assert_eq!(t.embedding, channel_embedding(&semantic, &b).unwrap());
    }

    #[test]
    fn synonym_prompts_join_photo_channel() {
        let lex = FixtureLexicon::parse(
            "bank\tedge\tsloping land\nerosion\tdeterioration\twearing away\n",
        )
        .unwrap();
        let resources = Resources {
            lexicon: Some(Arc::new(lex)),
            translator: None,
        };
        let config = PipelineConfig {
            synonym_prompts: true,
            ..PipelineConfig::default()
        };
        let t = text_embedding("bank", "bank erosion", &config, &backend(), &resources).unwrap();
        let photo = t.prompts.unwrap().photo_texts();
        assert_eq!(photo.last().unwrap(), "a photo of edge deterioration");
        assert_eq!(photo.len(), 4);
    }

    #[test]
    fn definition_stage_requires_lexicon() {
        let config = PipelineConfig {
            definitions: DefinitionStage {
                enabled: true,
                ..DefinitionStage::default()
            },
            ..PipelineConfig::vanilla()
        };
        assert!(Resources::default().check(&config).is_err());
    }

    #[test]
    fn definition_stage_falls_back_without_glosses() {
        let resources = Resources {
            lexicon: Some(Arc::new(FixtureLexicon::default())),
            translator: None,
        };
        let config = PipelineConfig {
            definitions: DefinitionStage {
                enabled: true,
                ..DefinitionStage::default()
            },
            ..PipelineConfig::vanilla()
        };
        let b = backend();
        let t = text_embedding("bank", "bank erosion", &config, &b, &resources).unwrap();
        assert_eq!(t.definition, None);
        assert_eq!(t.embedding, b.encode_text("bank erosion").unwrap());
    }

    #[test]
    fn config_validation() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        c.channels = ChannelsEnabled {
            semantic: false,
            photo: false,
        };
        assert!(c.validate().is_err());
        let c = PipelineConfig {
            tau: 0.0,
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
        let c = PipelineConfig {
            workers: 0,
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
