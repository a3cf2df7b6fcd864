//! Flat key/value run configuration.
//!
//! A config file is a TOML document of top-level keys only; every key must
//! appear in [`KEYS`]. Command-line `--set key=value` overrides are merged on
//! top before the configuration is interpreted. Relative paths in a file
//! resolve against the file's directory; in overrides, against the working
//! directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use toml::{Table, Value};

use crate::augment::{AugmentationProfile, Strategy};
use crate::backend::{EmbeddingBackend, MockBackend, MockConfig};
use crate::error::{Result, VwsdError};
use crate::lexicon::{FixtureLexicon, LexicalResource, WordNetLexicon};
use crate::pipeline::{ChannelsEnabled, PipelineConfig, Pooling, Resources};
use crate::prompts::load_templates;
use crate::translate::{TableTranslator, Translator};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("backend", "embedding backend: `mock`, or `clip` with the `clip` feature"),
    ("clip_model", "directory with a CLIP checkpoint in Hugging Face layout"),
    ("clip_name", "name recorded in reports; defaults to the model directory name"),
    ("mock_dim", "mock embedding dimension"),
    ("mock_resolution", "mock input image side in pixels"),
    ("mock_key", "mock hash key"),
    ("mock_anchors", "TSV of image, text, weight anchors for the mock backend"),
    ("prompting", "use the prompt ensemble instead of the raw phrase"),
    ("channels_enabled", "list drawn from semantic, photo"),
    ("synonym_prompts", "add synonym photo prompts (needs a lexicon)"),
    ("beta_p", "photo channel weight"),
    ("beta_s", "semantic channel weight"),
    ("semantic_templates_file", "semantic templates, one per line"),
    ("photo_templates_file", "photo templates, one per line"),
    ("synonym_templates_file", "synonym photo templates, one per line"),
    ("pooling", "`sentence` or `target` for the un-prompted phrase"),
    ("augmentation", "`profile` or `single-view`"),
    ("views_tta", "tta view count (max 5)"),
    ("views_geometric", "geometric view count"),
    ("views_photometric", "photometric view count"),
    ("views_multicrop", "quadrant crop count (max 4)"),
    ("views_grid", "grid patch count, a perfect square"),
    ("views_midquadrant", "mid-edge crop count (max 4)"),
    ("rotation_degrees", "maximum absolute rotation of geometric views"),
    ("brightness_jitter", "brightness jitter strength"),
    ("contrast_jitter", "contrast jitter strength"),
    ("saturation_jitter", "saturation jitter strength"),
    ("blur_sigma", "blur sigma in pixels"),
    ("tau", "temperature applied to the view mean"),
    ("definitions_enabled", "blend the best-matching gloss into the text embedding"),
    ("alpha", "gloss weight"),
    ("include_synonym_definitions", "also consider glosses of synonyms"),
    ("synonym_count", "synonyms consulted for glosses"),
    ("lexicon", "lexicon path"),
    ("lexicon_kind", "`fixture` (TSV) or `wordnet` (dict directory)"),
    ("translation_enabled", "average prompts over translations"),
    ("languages", "translation languages"),
    ("translations_file", "TSV of language, source, translation"),
    ("seed", "augmentation seed"),
    ("workers", "evaluation threads"),
    ("timing", "record latency statistics"),
    ("data", "dataset TSV"),
    ("gold", "gold label file"),
    ("images", "image directory"),
];

const PATH_KEYS: &[&str] = &[
    "clip_model",
    "mock_anchors",
    "semantic_templates_file",
    "photo_templates_file",
    "synonym_templates_file",
    "lexicon",
    "translations_file",
    "data",
    "gold",
    "images",
];

fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(VwsdError::UnknownConfigKey(key.to_string()))
    }
}

/// Raw merged key/value settings, before interpretation.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    table: Table,
}

impl ConfigSource {
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)
            .map_err(|e| VwsdError::io(format!("reading {}", path.display()), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&body, base)
    }

    /// Parses a TOML body whose relative paths resolve against `base`.
    pub fn parse(body: &str, base: &Path) -> Result<Self> {
        let table: Table = body
            .parse()
            .map_err(|e| VwsdError::Config(format!("config is not valid TOML: {e}")))?;
        let mut source = ConfigSource::default();
        for (key, value) in table {
            if value.is_table() {
                return Err(VwsdError::Config(format!(
                    "nested tables are not supported (`{key}`)"
                )));
            }
            source.insert(&key, value, base)?;
        }
        Ok(source)
    }

    fn insert(&mut self, key: &str, value: Value, base: &Path) -> Result<()> {
        check_key(key)?;
        let value = match value {
            Value::String(s) if PATH_KEYS.contains(&key) => {
                Value::String(base.join(s).to_string_lossy().into_owned())
            }
            v => v,
        };
        self.table.insert(key.to_string(), value);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        self.insert(key, value, Path::new(""))
    }

    /// Applies a `key=value` override. The value is read as a TOML value
    /// when it parses as one and as a bare string otherwise.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| VwsdError::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key, value)
    }

    /// The merged settings as a TOML document.
    pub fn to_toml_string(&self) -> String {
        self.table.to_string()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.table.get(key)
    }

    pub fn build(&self) -> Result<RunConfig> {
        RunConfig::from_source(self)
    }
}

fn type_error(key: &str, expected: &str, value: &Value) -> VwsdError {
    VwsdError::Config(format!("`{key}` must be {expected}, got `{value}`"))
}

struct Reader<'a>(&'a ConfigSource);

impl Reader<'_> {
    fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.0
            .get(key)
            .map(|v| v.as_bool().ok_or_else(|| type_error(key, "a boolean", v)))
            .transpose()
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        self.0
            .get(key)
            .map(|v| match v {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(type_error(key, "a number", v)),
            })
            .transpose()
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        self.0
            .get(key)
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                _ => Err(type_error(key, "a non-negative integer", v)),
            })
            .transpose()
    }

    fn string(&self, key: &str) -> Result<Option<&str>> {
        self.0
            .get(key)
            .map(|v| v.as_str().ok_or_else(|| type_error(key, "a string", v)))
            .transpose()
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }

    /// An array of strings, or one comma-separated string.
    fn list(&self, key: &str) -> Result<Option<Vec<String>>> {
        let Some(v) = self.0.get(key) else {
            return Ok(None);
        };
        let items: Vec<String> = match v {
            Value::String(s) => s.split(',').map(|p| p.trim().to_string()).collect(),
            Value::Array(a) => a
                .iter()
                .map(|x| x.as_str().map(str::to_string).ok_or_else(|| type_error(key, "a list of strings", v)))
                .collect::<Result<_>>()?,
            _ => return Err(type_error(key, "a list of strings", v)),
        };
        Ok(Some(items.into_iter().filter(|s| !s.is_empty()).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexiconKind {
    Fixture,
    WordNet,
}

/// An interpreted configuration: the pipeline settings plus everything
/// needed to construct the backend and resources.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub mock: MockConfig,
    pub mock_anchors: Option<PathBuf>,
    pub clip_model: Option<PathBuf>,
    pub clip_name: Option<String>,
    pub lexicon: Option<(LexiconKind, PathBuf)>,
    pub translations: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub images: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut source = ConfigSource::load(path)?;
        for o in overrides {
            source.apply_override(o)?;
        }
        source.build()
    }

    fn from_source(source: &ConfigSource) -> Result<Self> {
        let r = Reader(source);
        let mut run = RunConfig::default();
        let p = &mut run.pipeline;

        if let Some(name) = r.string("backend")? {
            p.backend = name.to_string();
        }
        if let Some(v) = r.uint("mock_dim")? {
            run.mock.dim = v as usize;
        }
        if let Some(v) = r.uint("mock_resolution")? {
            run.mock.image_resolution = v as u32;
        }
        if let Some(v) = r.uint("mock_key")? {
            run.mock.key = v;
        }
        run.mock_anchors = r.path("mock_anchors")?;
        run.clip_model = r.path("clip_model")?;
        run.clip_name = r.string("clip_name")?.map(str::to_string);

        if let Some(v) = r.bool("prompting")? {
            p.prompting = v;
        }
        if let Some(list) = r.list("channels_enabled")? {
            let mut channels = ChannelsEnabled {
                semantic: false,
                photo: false,
            };
            for c in &list {
                match c.as_str() {
                    "semantic" => channels.semantic = true,
                    "photo" => channels.photo = true,
                    other => {
                        return Err(VwsdError::Config(format!("unknown channel `{other}`")));
                    }
                }
            }
            p.channels = channels;
        }
        if let Some(v) = r.bool("synonym_prompts")? {
            p.synonym_prompts = v;
        }
        if let Some(v) = r.float("beta_p")? {
            p.fusion.beta_p = v;
        }
        if let Some(v) = r.float("beta_s")? {
            p.fusion.beta_s = v;
        }
        if let Some(path) = r.path("semantic_templates_file")? {
            p.templates.semantic = load_templates(&path)?;
        }
        if let Some(path) = r.path("photo_templates_file")? {
            p.templates.photo = load_templates(&path)?;
        }
        if let Some(path) = r.path("synonym_templates_file")? {
            p.templates.synonym_photo = load_templates(&path)?;
        }
        if let Some(v) = r.string("pooling")? {
            p.pooling = match v {
                "sentence" => Pooling::Sentence,
                "target" => Pooling::Target,
                other => return Err(VwsdError::Config(format!("unknown pooling `{other}`"))),
            };
        }

        match r.string("augmentation")? {
            None | Some("profile") => {}
            Some("single-view") => p.augmentation = AugmentationProfile::single_view(),
            Some(other) => {
                return Err(VwsdError::Config(format!("unknown augmentation mode `{other}`")));
            }
        }
        for s in Strategy::ALL {
            if let Some(n) = r.uint(&format!("views_{}", s.name()))? {
                p.augmentation.strategy_counts.insert(s, n as usize);
            }
        }
        p.augmentation.strategy_counts.retain(|_, n| *n > 0);
        if let Some(v) = r.float("rotation_degrees")? {
            p.augmentation.rotation_range_degrees = (-v.abs(), v.abs());
        }
        if let Some(v) = r.float("brightness_jitter")? {
            p.augmentation.jitter.brightness = v;
        }
        if let Some(v) = r.float("contrast_jitter")? {
            p.augmentation.jitter.contrast = v;
        }
        if let Some(v) = r.float("saturation_jitter")? {
            p.augmentation.jitter.saturation = v;
        }
        if let Some(v) = r.float("blur_sigma")? {
            p.augmentation.jitter.blur_sigma = v;
        }
        if let Some(v) = r.float("tau")? {
            p.tau = v;
        }

        if let Some(v) = r.bool("definitions_enabled")? {
            p.definitions.enabled = v;
        }
        if let Some(v) = r.float("alpha")? {
            p.definitions.alpha = v;
        }
        if let Some(v) = r.bool("include_synonym_definitions")? {
            p.definitions.include_synonyms = v;
        }
        if let Some(v) = r.uint("synonym_count")? {
            p.definitions.synonym_count = v as usize;
        }
        if let Some(path) = r.path("lexicon")? {
            let kind = match r.string("lexicon_kind")?.unwrap_or("fixture") {
                "fixture" => LexiconKind::Fixture,
                "wordnet" => LexiconKind::WordNet,
                other => return Err(VwsdError::Config(format!("unknown lexicon kind `{other}`"))),
            };
            run.lexicon = Some((kind, path));
        }

        if let Some(v) = r.bool("translation_enabled")? {
            p.translation.enabled = v;
        }
        if let Some(v) = r.list("languages")? {
            p.translation.languages = v;
        }
        run.translations = r.path("translations_file")?;

        if let Some(v) = r.uint("seed")? {
            p.set_seed(v);
        }
        if let Some(v) = r.uint("workers")? {
            p.workers = v as usize;
        }
        if let Some(v) = r.bool("timing")? {
            p.timing = v;
        }
        run.data = r.path("data")?;
        run.gold = r.path("gold")?;
        run.images = r.path("images")?;

        run.pipeline.validate()?;
        if run.pipeline.translation.enabled && run.pipeline.translation.languages.is_empty() {
            return Err(VwsdError::Config("translation is enabled but `languages` is empty".into()));
        }
        Ok(run)
    }

    /// Constructs the configured backend. Anchor image paths resolve
    /// against the anchor file's directory.
    pub fn backend(&self) -> Result<Arc<dyn EmbeddingBackend>> {
        match self.pipeline.backend.as_str() {
            "mock" => {
                let mut backend = MockBackend::new(self.mock.clone());
                if let Some(path) = &self.mock_anchors {
                    let root = path.parent().unwrap_or(Path::new("."));
                    let n = backend.load_anchors(path, root)?;
                    log::info!("loaded {n} mock anchors from {}", path.display());
                }
                Ok(Arc::new(backend))
            }
            #[cfg(feature = "clip")]
            "clip" => {
                let dir = self
                    .clip_model
                    .as_ref()
                    .ok_or_else(|| VwsdError::Config("backend `clip` needs `clip_model`".into()))?;
                let backend = crate::backend::ClipBackend::load(dir, self.clip_name.as_deref())?;
                log::info!("loaded CLIP model from {}", dir.display());
                Ok(Arc::new(backend))
            }
            other => Err(VwsdError::Config(format!(
                "unknown backend `{other}`; available: {}",
                if cfg!(feature = "clip") { "mock, clip" } else { "mock" }
            ))),
        }
    }

    pub fn resources(&self) -> Result<Resources> {
        let lexicon: Option<Arc<dyn LexicalResource>> = match &self.lexicon {
            None => None,
            Some((LexiconKind::Fixture, path)) => Some(Arc::new(FixtureLexicon::load(path)?)),
            Some((LexiconKind::WordNet, path)) => Some(Arc::new(WordNetLexicon::open(path)?)),
        };
        let translator: Option<Arc<dyn Translator>> = match &self.translations {
            None => None,
            Some(path) => Some(Arc::new(TableTranslator::load(path)?)),
        };
        let resources = Resources { lexicon, translator };
        resources.check(&self.pipeline)?;
        Ok(resources)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(body: &str) -> Result<RunConfig> {
        ConfigSource::parse(body, Path::new("/cfg"))?.build()
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(build("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        match build("betta_p = 0.5") {
            Err(VwsdError::UnknownConfigKey(k)) => assert_eq!(k, "betta_p"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_tables_rejected() {
        assert!(build("[section]\nx = 1").is_err());
    }

    #[test]
    fn reads_typed_values() {
        let c = build(
            "beta_p = 1\nbeta_s = 0.25\ntau = 0.9\nchannels_enabled = [\"photo\"]\nseed = 7\n\
             augmentation = \"single-view\"\nviews_grid = 4\nlanguages = \"es, fr\"\ndata = \"d.tsv\"",
        )
        .unwrap();
        assert_eq!(c.pipeline.fusion.beta_p, 1.0);
        assert_eq!(c.pipeline.fusion.beta_s, 0.25);
        assert!(!c.pipeline.channels.semantic && c.pipeline.channels.photo);
        assert_eq!(c.pipeline.seed(), 7);
        assert_eq!(c.pipeline.augmentation.total_views(), 5);
        assert_eq!(c.pipeline.translation.languages, vec!["es", "fr"]);
        assert_eq!(c.data, Some(PathBuf::from("/cfg/d.tsv")));
    }

    #[test]
    fn type_mismatch_is_config_error() {
        assert!(matches!(build("tau = \"hot\""), Err(VwsdError::Config(_))));
        assert!(matches!(build("workers = -1"), Err(VwsdError::Config(_))));
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut s = ConfigSource::parse("tau = 0.5\nbackend = \"mock\"", Path::new(".")).unwrap();
        s.apply_override("tau=2").unwrap();
        s.apply_override("backend=mock").unwrap();
        s.apply_override("prompting = false").unwrap();
        let c = s.build().unwrap();
        assert_eq!(c.pipeline.tau, 2.0);
        assert!(!c.pipeline.prompting);
        assert!(matches!(
            s.apply_override("nope=1"),
            Err(VwsdError::UnknownConfigKey(_))
        ));
        assert!(s.apply_override("tau").is_err());
    }

    #[test]
    fn validation_runs_on_build() {
        assert!(build("views_grid = 5").is_err());
        assert!(build("alpha = 1.5").is_err());
        assert!(build("backend = \"clip\"").unwrap().backend().is_err());
    }
}
