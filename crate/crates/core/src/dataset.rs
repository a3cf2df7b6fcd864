//! Loading, validating and splitting VWSD datasets in the SemEval TSV layout.
//!
//! A data file holds one sample per line: `word<TAB>phrase<TAB>img1 ... img10`.
//! The gold file holds the correct image filename for each data line.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VwsdError};

/// Number of candidate images per sample.
pub const CANDIDATES: usize = 10;

const HEADER_NAMES: &[&str] = &["word", "target", "target_word", "target word"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub target_word: String,
    pub context_phrase: String,
    /// Image references relative to the set's image root.
    pub candidates: Vec<String>,
    pub gold_index: Option<usize>,
}

impl Sample {
    /// Whether the target word occurs as a whitespace-delimited token of the
    /// context phrase.
    pub fn target_in_context(&self) -> bool {
        let target: Vec<&str> = self.target_word.split_whitespace().collect();
        let phrase: Vec<&str> = self.context_phrase.split_whitespace().collect();
        !target.is_empty() && phrase.windows(target.len()).any(|w| w == target.as_slice())
    }

    /// The context phrase with the target word's tokens removed, e.g.
    /// `"bank erosion"` with target `"bank"` gives `"erosion"`. When the
    /// target does not occur in the phrase, the whole phrase is returned.
    pub fn context_without_target(&self) -> String {
        context_without_target(&self.target_word, &self.context_phrase)
    }
}

pub fn context_without_target(target: &str, phrase: &str) -> String {
    let target: Vec<&str> = target.split_whitespace().collect();
    let tokens: Vec<&str> = phrase.split_whitespace().collect();
    if let Some(pos) = tokens
        .windows(target.len().max(1))
        .position(|w| w == target.as_slice())
    {
        let rest: Vec<&str> = tokens[..pos]
            .iter()
            .chain(&tokens[pos + target.len()..])
            .copied()
            .collect();
        if !rest.is_empty() {
            return rest.join(" ");
        }
    }
    phrase.trim().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Trial,
    Train,
    Test,
    Custom,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitName::Trial => "trial",
            SplitName::Train => "train",
            SplitName::Test => "test",
            SplitName::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for SplitName {
    type Err = VwsdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trial" => Ok(SplitName::Trial),
            "train" => Ok(SplitName::Train),
            "test" => Ok(SplitName::Test),
            "custom" => Ok(SplitName::Custom),
            other => Err(VwsdError::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub split_name: SplitName,
    pub image_root: PathBuf,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn resolve(&self, reference: &str) -> PathBuf {
        self.image_root.join(reference)
    }

    /// Checks the set-level and sample-level invariants. Returns the list of
    /// non-fatal warnings (target word missing from its phrase).
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut ids = HashSet::new();
        let mut warnings = Vec::new();
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(VwsdError::Config(format!("duplicate sample id `{}`", s.id)));
            }
            if s.target_word.trim().is_empty() {
                return Err(VwsdError::Config(format!("sample `{}` has an empty target", s.id)));
            }
            if s.candidates.len() != CANDIDATES {
                return Err(VwsdError::CandidateCount {
                    expected: CANDIDATES,
                    actual: s.candidates.len(),
                });
            }
            if let Some(g) = s.gold_index {
                if g >= CANDIDATES {
                    return Err(VwsdError::Config(format!(
                        "sample `{}` has gold index {g} outside the candidate list",
                        s.id
                    )));
                }
            }
            if !s.target_in_context() {
                warnings.push(format!(
                    "sample `{}`: target `{}` is not a token of `{}`",
                    s.id, s.target_word, s.context_phrase
                ));
            }
        }
        Ok(warnings)
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| VwsdError::io(format!("reading {}", path.display()), e))?;
    let mut lines: Vec<String> = text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

fn is_header(fields: &[&str]) -> bool {
    fields
        .first()
        .is_some_and(|f| HEADER_NAMES.contains(&f.trim().to_lowercase().as_str()))
}

/// Loads a data file and, optionally, its gold file.
///
/// An optional header row in the data file is skipped. Each sample's id is
/// its zero-based position in the file.
pub fn load_dataset(
    data_path: &Path,
    gold_path: Option<&Path>,
    image_root: &Path,
    split_name: SplitName,
) -> Result<SampleSet> {
    let lines = read_lines(data_path)?;
    let dataset_err = |line: usize, message: String| VwsdError::Dataset {
        path: data_path.to_path_buf(),
        line,
        message,
    };

    let mut samples = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let mut fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && is_header(&fields) {
            continue;
        }
        while fields.last().is_some_and(|f| f.trim().is_empty()) && fields.len() > 2 + CANDIDATES {
            fields.pop();
        }
        if fields.len() != 2 + CANDIDATES {
            return Err(dataset_err(
                line_no,
                format!(
                    "expected {} candidates, found {}",
                    CANDIDATES,
                    fields.len().saturating_sub(2)
                ),
            ));
        }
        let target_word = fields[0].trim().to_string();
        if target_word.is_empty() {
            return Err(dataset_err(line_no, "empty target word".into()));
        }
        let candidates: Vec<String> = fields[2..].iter().map(|f| f.trim().to_string()).collect();
        if let Some(pos) = candidates.iter().position(|c| c.is_empty()) {
            return Err(dataset_err(line_no, format!("candidate {} is empty", pos + 1)));
        }
        samples.push(Sample {
            id: format!("{}", samples.len()),
            target_word,
            context_phrase: fields[1].trim().to_string(),
            candidates,
            gold_index: None,
        });
    }

    if let Some(gold_path) = gold_path {
        let gold = read_lines(gold_path)?;
        if gold.len() != samples.len() {
            return Err(VwsdError::GoldLineCount {
                data: samples.len(),
                gold: gold.len(),
            });
        }
        for (idx, (sample, name)) in samples.iter_mut().zip(&gold).enumerate() {
            let name = name.trim();
            let pos = sample
                .candidates
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| VwsdError::Dataset {
                    path: gold_path.to_path_buf(),
                    line: idx + 1,
                    message: format!("gold image `{name}` is not among the line's candidates"),
                })?;
            sample.gold_index = Some(pos);
        }
    }

    let set = SampleSet {
        samples,
        split_name,
        image_root: image_root.to_path_buf(),
    };
    for warning in set.validate()? {
        log::warn!("{warning}");
    }
    Ok(set)
}

/// Writes a set back out in the same TSV layout. The gold file is written
/// only when every sample has a gold index.
pub fn write_dataset(set: &SampleSet, data_path: &Path, gold_path: Option<&Path>) -> Result<()> {
    let mut data = String::new();
    let mut gold = String::new();
    for s in &set.samples {
        data.push_str(&s.target_word);
        data.push('\t');
        data.push_str(&s.context_phrase);
        for c in &s.candidates {
            data.push('\t');
            data.push_str(c);
        }
        data.push('\n');
        if let Some(g) = s.gold_index {
            gold.push_str(&s.candidates[g]);
            gold.push('\n');
        }
    }
    fs::write(data_path, data)
        .map_err(|e| VwsdError::io(format!("writing {}", data_path.display()), e))?;
    if let Some(gold_path) = gold_path {
        if set.samples.iter().any(|s| s.gold_index.is_none()) {
            return Err(VwsdError::Config("cannot write gold file: missing gold index".into()));
        }
        fs::write(gold_path, gold)
            .map_err(|e| VwsdError::io(format!("writing {}", gold_path.display()), e))?;
    }
    Ok(())
}

fn train_size(n: usize, fraction: f64) -> usize {
    // the epsilon keeps products like 10 * 0.8 from rounding up past 8
    let raw = (n as f64 * fraction - 1e-9).ceil();
    (raw.max(0.0) as usize).min(n)
}

/// Deterministically partitions `set` into `(train, validation)` with
/// `ceil(N * fraction)` training samples. Both halves keep the input order.
pub fn split_train_validation(
    set: &SampleSet,
    fraction: f64,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(VwsdError::Config(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if set.is_empty() {
        return Err(VwsdError::EmptyInput("sample set to split"));
    }
    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..train_size(n, fraction)] {
        in_train[i] = true;
    }
    let (train, valid): (Vec<_>, Vec<_>) = set
        .samples
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    let part = |samples: Vec<(Sample, bool)>, split_name| SampleSet {
        samples: samples.into_iter().map(|(s, _)| s).collect(),
        split_name,
        image_root: set.image_root.clone(),
    };
    Ok((part(train, set.split_name), part(valid, SplitName::Custom)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn candidates() -> Vec<String> {
        (1..=10).map(|i| format!("img{i}.jpg")).collect()
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn line(word: &str, phrase: &str) -> String {
        format!("{word}\t{phrase}\t{}\n", candidates().join("\t"))
    }

    fn synthetic(n: usize) -> SampleSet {
        SampleSet {
            samples: (0..n)
                .map(|i| Sample {
                    id: i.to_string(),
                    target_word: "w".into(),
                    context_phrase: "w x".into(),
                    candidates: candidates(),
                    gold_index: Some(i % 10),
                })
                .collect(),
            split_name: SplitName::Train,
            image_root: PathBuf::from("."),
        }
    }

    #[test]
    fn bank_erosion_line() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "d.tsv", &line("bank", "bank erosion"));
        let gold = write(dir.path(), "g.txt", "img3.jpg\n");
        let set = load_dataset(&data, Some(&gold), dir.path(), SplitName::Trial).unwrap();
        let s = &set.samples[0];
        assert_eq!(s.target_word, "bank");
        assert_eq!(s.context_phrase, "bank erosion");
        assert_eq!(s.gold_index, Some(2));
        assert_eq!(s.context_without_target(), "erosion");
    }

    #[test]
    fn gold_in_first_position() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "d.tsv", &line("bank", "bank erosion"));
        let gold = write(dir.path(), "g.txt", "img1.jpg\n");
        let set = load_dataset(&data, Some(&gold), dir.path(), SplitName::Trial).unwrap();
        assert_eq!(set.samples[0].gold_index, Some(0));
    }

    #[test]
    fn header_row_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "word\tphrase\t{}\n{}",
            (1..=10).map(|i| format!("image_{i}")).collect::<Vec<_>>().join("\t"),
            line("tank", "water tank")
        );
        let data = write(dir.path(), "d.tsv", &body);
        let set = load_dataset(&data, None, dir.path(), SplitName::Test).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.samples[0].target_word, "tank");
        assert_eq!(set.samples[0].gold_index, None);
    }

    #[test]
    fn gold_line_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "d.tsv", &line("bank", "bank erosion"));
        let gold = write(dir.path(), "g.txt", "img1.jpg\nimg2.jpg\n");
        let err = load_dataset(&data, Some(&gold), dir.path(), SplitName::Trial).unwrap_err();
        assert!(matches!(err, VwsdError::GoldLineCount { data: 1, gold: 2 }));
    }

    #[test]
    fn gold_not_among_candidates_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(
            dir.path(),
            "d.tsv",
            &format!("{}{}", line("a", "a b"), line("c", "c d")),
        );
        let gold = write(dir.path(), "g.txt", "img1.jpg\nmissing.jpg\n");
        match load_dataset(&data, Some(&gold), dir.path(), SplitName::Trial).unwrap_err() {
            VwsdError::Dataset { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("missing.jpg"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_candidate_count_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let short = "bank\tbank erosion\ta.jpg\tb.jpg\n";
        let data = write(dir.path(), "d.tsv", &format!("{}{short}", line("x", "x y")));
        match load_dataset(&data, None, dir.path(), SplitName::Trial).unwrap_err() {
            VwsdError::Dataset { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let long = format!("x\tx y\t{}\textra.jpg\n", candidates().join("\t"));
        let data = write(dir.path(), "d2.tsv", &long);
        assert!(load_dataset(&data, None, dir.path(), SplitName::Trial).is_err());
    }

    #[test]
    fn missing_target_is_only_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "d.tsv", &line("run", "running shoes"));
        let set = load_dataset(&data, None, dir.path(), SplitName::Trial).unwrap();
        assert_eq!(set.validate().unwrap().len(), 1);
        assert_eq!(set.samples[0].context_without_target(), "running shoes");
    }

    #[test]
    fn three_line_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{}{}{}",
            line("bank", "bank erosion"),
            line("router", "internet router"),
            line("tank", "army tank")
        );
        let data = write(dir.path(), "d.tsv", &body);
        let gold = write(dir.path(), "g.txt", "img3.jpg\nimg10.jpg\nimg1.jpg\n");
        let set = load_dataset(&data, Some(&gold), dir.path(), SplitName::Trial).unwrap();

        let data2 = dir.path().join("d2.tsv");
        let gold2 = dir.path().join("g2.txt");
        write_dataset(&set, &data2, Some(&gold2)).unwrap();
        assert_eq!(fs::read_to_string(&data2).unwrap(), body);
        let again = load_dataset(&data2, Some(&gold2), dir.path(), SplitName::Trial).unwrap();
        assert_eq!(again, set);
        assert_eq!(
            again.samples.iter().map(|s| s.gold_index).collect::<Vec<_>>(),
            vec![Some(2), Some(9), Some(0)]
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let set = synthetic(10);
        let (a, b) = split_train_validation(&set, 0.8, 7).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let ids: HashSet<_> = a.samples.iter().map(|s| &s.id).collect();
        assert!(b.samples.iter().all(|s| !ids.contains(&s.id)));
        let (a2, b2) = split_train_validation(&set, 0.8, 7).unwrap();
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn split_size_for_semeval_train() {
        assert_eq!(train_size(12869, 0.8), 10296);
        assert_eq!(12869 - train_size(12869, 0.8), 2573);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let set = synthetic(4);
        for f in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(split_train_validation(&set, f, 1).is_err());
        }
    }

    #[test]
    fn split_rejects_empty_set() {
        assert!(split_train_validation(&synthetic(0), 0.5, 1).is_err());
    }
}
