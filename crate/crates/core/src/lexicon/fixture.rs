use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{same_word, LexicalEntry, LexicalResource};
use crate::error::{Result, VwsdError};

/// In-memory lexicon read from `word<TAB>syn1|syn2<TAB>gloss1|gloss2` lines.
#[derive(Debug, Clone, Default)]
pub struct FixtureLexicon {
    entries: HashMap<String, LexicalEntry>,
}

fn split_list(field: &str) -> Vec<String> {
    field
        .split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

impl FixtureLexicon {
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)
            .map_err(|e| VwsdError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&body).map_err(|e| match e {
            VwsdError::Dataset { line, message, .. } => VwsdError::Dataset {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn parse(body: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in body.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[0].trim().is_empty() {
                return Err(VwsdError::Dataset {
                    path: "<lexicon>".into(),
                    line: idx + 1,
                    message: "expected word, synonyms and glosses".into(),
                });
            }
            let word = fields[0].trim().replace(' ', "_").to_lowercase();
            let mut synonyms: Vec<String> = Vec::new();
            for s in split_list(fields[1]) {
                if !same_word(&s, &word) && !synonyms.iter().any(|o| same_word(o, &s)) {
                    synonyms.push(s);
                }
            }
            entries.insert(
                word.clone(),
                LexicalEntry {
                    word,
                    synonyms,
                    definitions: split_list(fields[2]),
                },
            );
        }
        Ok(FixtureLexicon { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl LexicalResource for FixtureLexicon {
    fn entry(&self, key: &str) -> Option<LexicalEntry> {
        self.entries.get(key).cloned()
    }
}
