//! Labeled text corpora and the `label<TAB>text` file format.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{source_name}: no valid lines ({malformed} malformed)")]
    NoValidLines {
        source_name: String,
        malformed: usize,
    },
    #[error("{0} split is empty")]
    EmptySplit(Split),
    #[error("example {index} has an empty text")]
    EmptyText { index: usize },
    #[error("example {index} has label id {label} but the catalog has {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("class catalog contains {0:?} twice")]
    DuplicateClass(String),
    #[error("cannot export example {index}: {reason}")]
    Unexportable { index: usize, reason: &'static str },
    #[error("class {0:?} has no examples in the subsample")]
    EmptyClass(String),
    #[error("fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: usize,
}

/// Examples of one split plus the class catalog their label ids index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    split: Split,
    classes: Vec<String>,
    examples: Vec<Example>,
}

impl LabeledCorpus {
    pub fn new(split: Split, classes: Vec<String>, examples: Vec<Example>) -> Result<Self, CorpusError> {
        let mut seen = HashMap::new();
        for c in &classes {
            if seen.insert(c.as_str(), ()).is_some() {
                return Err(CorpusError::DuplicateClass(c.clone()));
            }
        }
        for (index, ex) in examples.iter().enumerate() {
            if ex.text.trim().is_empty() {
                return Err(CorpusError::EmptyText { index });
            }
            if ex.label >= classes.len() {
                return Err(CorpusError::LabelOutOfRange {
                    index,
                    label: ex.label,
                    classes: classes.len(),
                });
            }
        }
        Ok(Self {
            split,
            classes,
            examples,
        })
    }

    /// Builds a corpus from `(class name, text)` pairs, assigning class ids
    /// by first appearance.
    pub fn from_pairs<L, T, I>(split: Split, pairs: I) -> Result<Self, CorpusError>
    where
        L: Into<String>,
        T: Into<String>,
        I: IntoIterator<Item = (L, T)>,
    {
        let mut classes = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut examples = Vec::new();
        for (label, text) in pairs {
            let label = label.into();
            let next = classes.len();
            let id = *ids.entry(label.clone()).or_insert_with(|| {
                classes.push(label);
                next
            });
            examples.push(Example {
                text: text.into(),
                label: id,
            });
        }
        Self::new(split, classes, examples)
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.text.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Example count per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    /// Same split and catalog, examples at `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            split: self.split,
            classes: self.classes.clone(),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    /// Re-expresses labels against `catalog`, appending classes it lacks.
    pub fn with_catalog(&self, catalog: &[String]) -> Self {
        let mut classes = catalog.to_vec();
        let remap: Vec<usize> = self
            .classes
            .iter()
            .map(|c| match classes.iter().position(|k| k == c) {
                Some(i) => i,
                None => {
                    classes.push(c.clone());
                    classes.len() - 1
                }
            })
            .collect();
        Self {
            split: self.split,
            classes,
            examples: self
                .examples
                .iter()
                .map(|e| Example {
                    text: e.text.clone(),
                    label: remap[e.label],
                })
                .collect(),
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Keeps at most `cap` examples, chosen uniformly by `seed`, in their
    /// original order.
    pub fn capped(&self, cap: usize, seed: u64) -> Self {
        if self.len() <= cap {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(cap);
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// Indices ordered so that every prefix is stratified: each class's
    /// share of any prefix of length `t` stays within one example of
    /// `t · n_c / n`. Within a class, examples follow a `seed`-shuffled order.
    pub fn stratified_order(&self, seed: u64) -> Vec<usize> {
        let n = self.len();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.classes.len()];
        for (i, e) in self.examples.iter().enumerate() {
            by_class[e.label].push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for members in &mut by_class {
            members.shuffle(&mut rng);
        }
        let mut taken = vec![0usize; by_class.len()];
        let mut order = Vec::with_capacity(n);
        for t in 1..=n {
            // class with the largest deficit against its proportional share
            let mut best = None;
            let mut best_deficit = f64::NEG_INFINITY;
            for (c, members) in by_class.iter().enumerate() {
                if taken[c] == members.len() {
                    continue;
                }
                let deficit = t as f64 * members.len() as f64 / n as f64 - taken[c] as f64;
                if deficit > best_deficit + 1e-12 {
                    best_deficit = deficit;
                    best = Some(c);
                }
            }
            let c = best.expect("some class has remaining members");
            order.push(by_class[c][taken[c]]);
            taken[c] += 1;
        }
        order
    }

    /// Nested, stratified subsample of `round(fraction · n)` examples in
    /// original order. Subsamples for the same seed are nested across
    /// fractions, and fraction 1 returns the corpus unchanged.
    pub fn stratified_subsample(&self, fraction: f64, seed: u64) -> Result<Self, CorpusError> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(CorpusError::BadFraction(fraction));
        }
        if fraction == 1.0 {
            return Ok(self.clone());
        }
        let keep = (fraction * self.len() as f64).round() as usize;
        let mut idx = self.stratified_order(seed);
        idx.truncate(keep);
        idx.sort_unstable();
        let sub = self.subset(&idx);
        let full = self.class_counts();
        for (c, &count) in sub.class_counts().iter().enumerate() {
            if count == 0 && full[c] > 0 {
                return Err(CorpusError::EmptyClass(self.classes[c].clone()));
            }
        }
        Ok(sub)
    }
}

/// A line that could not be read as an example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalformedLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: &'static str,
    pub content: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: LabeledCorpus,
    pub malformed: Vec<MalformedLine>,
}

fn is_header(label: &str, text: &str) -> bool {
    label.trim().eq_ignore_ascii_case("label") && text.trim().eq_ignore_ascii_case("text")
}

/// Parses `label<TAB>text` lines. Lines starting with `#` and blank lines
/// are skipped; an optional `label<TAB>text` header may open the file. A
/// second header, a line without a TAB, or an empty label or text is
/// reported rather than silently dropped.
pub fn parse_tsv(content: &str, split: Split, source_name: &str) -> Result<Ingested, CorpusError> {
    let mut pairs = Vec::new();
    let mut malformed = Vec::new();
    let mut header_seen = false;
    let mut data_seen = false;
    for (i, raw) in content.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason| MalformedLine {
            line: i + 1,
            reason,
            content: line.to_string(),
        };
        let Some((label, text)) = line.split_once('\t') else {
            malformed.push(bad("missing TAB separator"));
            continue;
        };
        if is_header(label, text) {
            if header_seen || data_seen {
                malformed.push(bad("duplicate header"));
            }
            header_seen = true;
            continue;
        }
        let (label, text) = (label.trim(), text.trim());
        if label.is_empty() {
            malformed.push(bad("empty label"));
            continue;
        }
        if text.is_empty() {
            malformed.push(bad("empty text"));
            continue;
        }
        data_seen = true;
        pairs.push((label.to_string(), text.to_string()));
    }
    if pairs.is_empty() {
        return Err(CorpusError::NoValidLines {
            source_name: source_name.to_string(),
            malformed: malformed.len(),
        });
    }
    for m in &malformed {
        warn!("{source_name}:{}: {} ({:?})", m.line, m.reason, m.content);
    }
    Ok(Ingested {
        corpus: LabeledCorpus::from_pairs(split, pairs)?,
        malformed,
    })
}

pub fn ingest(path: impl AsRef<Path>, split: Split) -> Result<Ingested, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tsv(&content, split, &path.display().to_string())
}

/// Renders `label<TAB>text` lines under a header row.
pub fn export_tsv(corpus: &LabeledCorpus) -> Result<String, CorpusError> {
    let mut out = String::from("label\ttext\n");
    for (index, e) in corpus.examples.iter().enumerate() {
        let label = &corpus.classes[e.label];
        if label.contains(['\t', '\n', '\r']) || label.starts_with('#') {
            return Err(CorpusError::Unexportable {
                index,
                reason: "label contains a TAB, a line break or a leading '#'",
            });
        }
        if e.text.contains(['\n', '\r']) || e.text != e.text.trim() {
            return Err(CorpusError::Unexportable {
                index,
                reason: "text contains a line break or surrounding whitespace",
            });
        }
        out.push_str(label);
        out.push('\t');
        out.push_str(&e.text);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_tsv(corpus: &LabeledCorpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, export_tsv(corpus)?).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Train, dev and test splits sharing one class catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: LabeledCorpus,
    pub dev: LabeledCorpus,
    pub test: LabeledCorpus,
}

impl Dataset {
    /// Unifies the catalogs: train classes first, then classes first seen
    /// in dev, then in test.
    pub fn new(train: LabeledCorpus, dev: LabeledCorpus, test: LabeledCorpus) -> Self {
        let dev = dev.with_catalog(train.classes()).with_split(Split::Dev);
        let test = test.with_catalog(dev.classes()).with_split(Split::Test);
        let dev = dev.with_catalog(test.classes());
        let train = train.with_catalog(test.classes()).with_split(Split::Train);
        Self { train, dev, test }
    }

    pub fn classes(&self) -> &[String] {
        self.train.classes()
    }

    pub fn split(&self, split: Split) -> &LabeledCorpus {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    /// Reads `train.tsv`, `dev.tsv` and `test.tsv` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref();
        let read = |s: Split| ingest(dir.join(format!("{}.tsv", s.name())), s).map(|i| i.corpus);
        Ok(Self::new(read(Split::Train)?, read(Split::Dev)?, read(Split::Test)?))
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for s in Split::ALL {
            write_tsv(self.split(s), dir.join(format!("{}.tsv", s.name())))?;
        }
        Ok(())
    }
}
