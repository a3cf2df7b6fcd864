//! Reader for the Princeton WordNet database files (`index.<pos>` and
//! `data.<pos>` in a `dict/` directory).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{same_word, LexicalEntry, LexicalResource};
use crate::error::{Result, VwsdError};

/// Parts of speech in lookup order.
const POS_FILES: [&str; 4] = ["noun", "verb", "adj", "adv"];

struct Synset {
    lemmas: Vec<String>,
    definition: String,
}

pub struct WordNetLexicon {
    /// lemma -> synset offsets per part of speech, in index order.
    index: HashMap<String, Vec<(usize, Vec<u64>)>>,
    data: Vec<Vec<u8>>,
}

impl WordNetLexicon {
    pub fn open(dict_dir: &Path) -> Result<Self> {
        let read = |name: String| -> Result<Vec<u8>> {
            let p = dict_dir.join(name);
            fs::read(&p).map_err(|e| VwsdError::io(format!("reading {}", p.display()), e))
        };
        let mut index: HashMap<String, Vec<(usize, Vec<u64>)>> = HashMap::new();
        let mut data = Vec::with_capacity(POS_FILES.len());
        for (pos, name) in POS_FILES.iter().enumerate() {
            let raw = read(format!("index.{name}"))?;
            let text = String::from_utf8_lossy(&raw);
            for (line_no, line) in text.lines().enumerate() {
                if line.starts_with(' ') || line.trim().is_empty() {
                    continue;
                }
                let (lemma, offsets) = parse_index_line(line).ok_or_else(|| VwsdError::Dataset {
                    path: dict_dir.join(format!("index.{name}")),
                    line: line_no + 1,
                    message: "malformed index line".into(),
                })?;
                index.entry(lemma).or_default().push((pos, offsets));
            }
            data.push(read(format!("data.{name}"))?);
        }
        Ok(WordNetLexicon { index, data })
    }

    fn synset(&self, pos: usize, offset: u64) -> Option<Synset> {
        let bytes = self.data.get(pos)?;
        let start = usize::try_from(offset).ok()?;
        let rest = bytes.get(start..)?;
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        parse_data_line(&String::from_utf8_lossy(&rest[..end]))
    }
}

fn parse_index_line(line: &str) -> Option<(String, Vec<u64>)> {
    let f: Vec<&str> = line.split_whitespace().collect();
    let lemma = f.first()?.to_string();
    let synset_cnt: usize = f.get(2)?.parse().ok()?;
    let p_cnt: usize = f.get(3)?.parse().ok()?;
    // lemma pos synset_cnt p_cnt [ptr_symbol...] sense_cnt tagsense_cnt offsets...
    let first_offset = 4 + p_cnt + 2;
    let offsets = f
        .get(first_offset..first_offset + synset_cnt)?
        .iter()
        .map(|o| o.parse().ok())
        .collect::<Option<Vec<u64>>>()?;
    Some((lemma, offsets))
}

fn parse_data_line(line: &str) -> Option<Synset> {
    let (head, gloss) = line.split_once(" | ").unwrap_or((line, ""));
    let f: Vec<&str> = head.split_whitespace().collect();
    let w_cnt = usize::from_str_radix(f.get(3)?, 16).ok()?;
    let lemmas = (0..w_cnt)
        .map(|i| {
            f.get(4 + 2 * i).map(|w| {
                // adjective lemmas may carry a syntactic marker like `(a)`
                match w.find('(') {
                    Some(p) if w.ends_with(')') => w[..p].to_string(),
                    _ => w.to_string(),
                }
            })
        })
        .collect::<Option<Vec<String>>>()?;
    let definition = gloss
        .trim()
        .split("; ")
        .filter(|part| !part.starts_with('"'))
        .collect::<Vec<_>>()
        .join("; ");
    Some(Synset { lemmas, definition })
}

impl LexicalResource for WordNetLexicon {
    fn entry(&self, key: &str) -> Option<LexicalEntry> {
        let postings = self.index.get(key)?;
        let mut entry = LexicalEntry {
            word: key.to_string(),
            ..LexicalEntry::default()
        };
        for (pos, offsets) in postings {
            for &offset in offsets {
                let Some(synset) = self.synset(*pos, offset) else {
                    log::warn!("dangling synset offset {offset} for `{key}`");
                    continue;
                };
                for lemma in synset.lemmas {
                    if !same_word(&lemma, key) && !entry.synonyms.iter().any(|s| same_word(s, &lemma)) {
                        entry.synonyms.push(lemma);
                    }
                }
                if !synset.definition.is_empty() {
                    entry.definitions.push(synset.definition);
                }
            }
        }
        Some(entry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{candidate_definitions, lookup_synonym};

    /// Writes a miniature database whose data offsets are computed from the
    /// actual line lengths.
    fn write_db(dir: &Path) {
        let license = "  1 This software and database is being provided\n";
        let noun_synsets = [
            "09213565 17 n 01 bank 0 000 | sloping land (especially the slope beside a body of water); \"they pulled the canoe up on the bank\"",
            "08420278 14 n 02 depository_financial_institution 0 bank 0 000 | a financial institution that accepts deposits",
            "09265620 17 n 02 bank 1 edge 0 000 | a slope in the turn of a road or track",
        ];
        let mut data = license.to_string();
        let mut offsets = Vec::new();
        for s in noun_synsets {
            offsets.push(data.len());
            data.push_str(s);
            data.push('\n');
        }
        fs::write(dir.join("data.noun"), &data).unwrap();
        let index = format!(
            "{license}bank n 3 1 @ 3 0 {:08} {:08} {:08}\nedge n 1 0 1 0 {:08}\n",
            offsets[0], offsets[1], offsets[2], offsets[2]
        );
        fs::write(dir.join("index.noun"), index).unwrap();

        let verb = license.to_string();
        let mut vdata = verb.clone();
        let voff = vdata.len();
        vdata.push_str("02039156 38 v 01 bank 0 000 | tip laterally; \"the pilot had to bank the aircraft\"\n");
        fs::write(dir.join("data.verb"), vdata).unwrap();
        fs::write(dir.join("index.verb"), format!("{license}bank v 1 0 1 0 {voff:08}\n")).unwrap();

        let mut adata = license.to_string();
        let aoff = adata.len();
        adata.push_str("00001740 00 a 01 able(a) 0 000 | having the necessary means\n");
        fs::write(dir.join("data.adj"), adata).unwrap();
        fs::write(dir.join("index.adj"), format!("{license}able a 1 0 1 0 {aoff:08}\n")).unwrap();

        fs::write(dir.join("data.adv"), license).unwrap();
        fs::write(dir.join("index.adv"), license).unwrap();
    }

    #[test]
    fn reads_synonyms_and_glosses_in_resource_order() {
        let dir = tempfile::tempdir().unwrap();
        write_db(dir.path());
        let wn = WordNetLexicon::open(dir.path()).unwrap();
        let entry = wn.entry("bank").unwrap();
        assert_eq!(entry.synonyms, vec!["depository_financial_institution", "edge"]);
        assert_eq!(
            entry.definitions,
            vec![
                "sloping land (especially the slope beside a body of water)",
                "a financial institution that accepts deposits",
                "a slope in the turn of a road or track",
                "tip laterally",
            ]
        );
        assert_eq!(
            lookup_synonym(&wn, "bank").as_deref(),
            Some("depository financial institution")
        );
        assert_eq!(
            candidate_definitions(&wn, "edge", false, 2).unwrap(),
            vec!["a slope in the turn of a road or track"]
        );
    }

    #[test]
    fn strips_adjective_markers() {
        let dir = tempfile::tempdir().unwrap();
        write_db(dir.path());
        let wn = WordNetLexicon::open(dir.path()).unwrap();
        assert_eq!(wn.entry("able").unwrap().synonyms, Vec::<String>::new());
        assert!(wn.entry("zyzzyva").is_none());
    }

    #[test]
    fn missing_directory_is_io_error() {
        assert!(WordNetLexicon::open(Path::new("/nonexistent/wordnet")).is_err());
    }
}
