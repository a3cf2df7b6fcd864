//! Synonyms and glosses from a lexical database, and blending of the best
//! matching gloss into a contextual embedding.

mod fixture;
mod wordnet;

use serde::{Deserialize, Serialize};

use crate::backend::EmbeddingBackend;
use crate::embedding::{weighted_sum, Embedding};
use crate::error::{Result, VwsdError};
use crate::ranker::cosine;

pub use fixture::FixtureLexicon;
pub use wordnet::WordNetLexicon;

pub const DEFAULT_SYNONYM_COUNT: usize = 2;

/// Everything the resource knows about one word.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LexicalEntry {
    pub word: String,
    /// Distinct lemmas other than the word itself, in resource order, with
    /// underscores mapped to spaces.
    pub synonyms: Vec<String>,
    /// Glosses in resource order.
    pub definitions: Vec<String>,
}

/// A read-only lexical database keyed by normalized lemma
/// (lowercase, spaces replaced by underscores).
pub trait LexicalResource: Send + Sync {
    fn entry(&self, key: &str) -> Option<LexicalEntry>;
}

pub(crate) fn surface(lemma: &str) -> String {
    lemma.replace('_', " ")
}

pub(crate) fn same_word(a: &str, b: &str) -> bool {
    surface(a).trim().to_lowercase() == surface(b).trim().to_lowercase()
}

fn lookup_key(word: &str) -> String {
    word.split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .to_lowercase()
}

/// Looks `word` up, retrying multi-word phrases with their last token.
pub fn resolve_entry(resource: &dyn LexicalResource, word: &str) -> Option<LexicalEntry> {
    let key = lookup_key(word);
    if key.is_empty() {
        return None;
    }
    resource.entry(&key).or_else(|| {
        let tokens: Vec<&str> = word.split_whitespace().collect();
        match tokens.as_slice() {
            [_, .., head] => resource.entry(&head.to_lowercase()),
            _ => None,
        }
    })
}

/// The first lemma, in resource order, that differs from `word`.
pub fn lookup_synonym(resource: &dyn LexicalResource, word: &str) -> Option<String> {
    top_synonyms(resource, word, 1).into_iter().next()
}

/// The first `count` distinct lemmas that differ from `word`.
pub fn top_synonyms(resource: &dyn LexicalResource, word: &str, count: usize) -> Vec<String> {
    let Some(entry) = resolve_entry(resource, word) else {
        return Vec::new();
    };
    let mut out: Vec<String> = Vec::new();
    for s in entry.synonyms {
        if out.len() == count {
            break;
        }
        if !same_word(&s, word) && !out.iter().any(|o| same_word(o, &s)) {
            out.push(surface(&s));
        }
    }
    out
}

/// Glosses of `word`, optionally followed by the glosses of its first
/// `synonym_count` synonyms, de-duplicated keeping first occurrences.
pub fn candidate_definitions(
    resource: &dyn LexicalResource,
    word: &str,
    include_synonyms: bool,
    synonym_count: usize,
) -> Result<Vec<String>> {
    if word.trim().is_empty() {
        return Err(VwsdError::EmptyInput("lexicon query"));
    }
    let mut defs: Vec<String> = resolve_entry(resource, word)
        .map(|e| e.definitions)
        .unwrap_or_default();
    if include_synonyms {
        for syn in top_synonyms(resource, word, synonym_count) {
            if let Some(e) = resolve_entry(resource, &syn) {
                defs.extend(e.definitions);
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    defs.retain(|d| seen.insert(d.clone()));
    if defs.is_empty() {
        return Err(VwsdError::NoDefinitions(word.to_string()));
    }
    Ok(defs)
}

/// Index and embedding of the definition closest to `h_t` under cosine
/// similarity. Ties go to the lowest index.
pub fn select_definition(
    h_t: &Embedding,
    definitions: &[String],
    backend: &dyn EmbeddingBackend,
) -> Result<(usize, Embedding)> {
    if definitions.is_empty() {
        return Err(VwsdError::EmptyInput("definition list"));
    }
    let encoded = backend.encode_text_batch(definitions)?;
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, e) in encoded.iter().enumerate() {
        let s = cosine(h_t, e)?;
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    let chosen = encoded.into_iter().nth(best).expect("index within list");
    Ok((best, chosen))
}

/// `normalize(alpha * h_dstar + (1 - alpha) * h_t)`.
pub fn blend_definition(h_dstar: &Embedding, h_t: &Embedding, alpha: f64) -> Result<Embedding> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(VwsdError::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    h_dstar.check_dim(h_t)?;
    // At the endpoints the blend is one of the inputs; skip the
    // renormalization so unit inputs come back bit for bit.
    match alpha {
        a if a == 0.0 && h_t.is_normalized() => return Ok(h_t.clone()),
        a if a == 1.0 && h_dstar.is_normalized() => return Ok(h_dstar.clone()),
        _ => {}
    }
    weighted_sum(h_dstar, alpha, h_t, 1.0 - alpha)?
        .normalize("definition blend")
        .map_err(|_| VwsdError::Degenerate("definition blend"))
}
