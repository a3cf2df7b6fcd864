//! Prompt translation for the multilingual ensemble.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Result, VwsdError};

pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, language: &str) -> Result<String>;
}

/// Returns every text unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _language: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Lookup table of pre-computed translations, read from
/// `language<TAB>source<TAB>translation` lines. Missing entries fail.
#[derive(Debug, Clone, Default)]
pub struct TableTranslator {
    entries: HashMap<(String, String), String>,
}

impl TableTranslator {
    pub fn insert(&mut self, language: &str, source: &str, translation: &str) {
        self.entries
            .insert((language.to_string(), source.to_string()), translation.to_string());
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)
            .map_err(|e| VwsdError::io(format!("reading {}", path.display()), e))?;
        let mut table = TableTranslator::default();
        for (idx, line) in body.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(VwsdError::Dataset {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: "expected language, source and translation".into(),
                });
            }
            table.insert(fields[0].trim(), fields[1], fields[2]);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Translator for TableTranslator {
    fn translate(&self, text: &str, language: &str) -> Result<String> {
        self.entries
            .get(&(language.to_string(), text.to_string()))
            .cloned()
            .ok_or_else(|| VwsdError::Translation {
                language: language.to_string(),
                message: format!("no entry for `{text}`"),
            })
    }
}
