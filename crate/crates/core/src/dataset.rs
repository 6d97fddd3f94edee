//! Weak-labeled sentence sets: corpus labeling, unknown-class under-sampling,
//! stratified train/validation splits and the dataset JSONL format.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{segment_sentences, Corpus};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::label::Label;
use crate::rules::{label_sentence, CompiledRuleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Weak,
    Gold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence_id: String,
    pub doc_id: String,
    pub text: String,
    pub label: Label,
    pub source: Source,
}

/// Provenance written next to every dataset file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruleset_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_corpus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub n_sentences: usize,
    #[serde(default)]
    pub n_documents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<ClassDistribution>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub sentences: Vec<LabeledSentence>,
    pub meta: DatasetMeta,
}

impl LabeledSet {
    pub fn new(sentences: Vec<LabeledSentence>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, s) in sentences.iter().enumerate() {
            if !seen.insert(s.sentence_id.as_str()) {
                return Err(Error::DuplicateId {
                    id: s.sentence_id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(LabeledSet {
            sentences,
            meta: DatasetMeta::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.sentences.iter().map(|s| s.label).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.sentences.iter().filter(|s| s.label == label).count()
    }

    fn with_subset(&self, keep: &[usize]) -> LabeledSet {
        LabeledSet {
            sentences: keep.iter().map(|&i| self.sentences[i].clone()).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Fills the derived counts in the metadata.
    pub fn refresh_meta(&mut self) {
        self.meta.n_sentences = self.sentences.len();
        self.meta.n_documents = self
            .sentences
            .iter()
            .map(|s| s.doc_id.as_str())
            .collect::<HashSet<_>>()
            .len();
        self.meta.distribution = Some(class_distribution(self));
    }
}

/// Segments and labels every document, in document then sentence order.
pub fn weak_label_corpus(corpus: &Corpus, rules: &CompiledRuleSet) -> LabeledSet {
    let sentences: Vec<LabeledSentence> = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            segment_sentences(doc)
                .iter()
                .map(|s| label_sentence(s, rules))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut set = LabeledSet {
        sentences,
        meta: DatasetMeta {
            ruleset_hash: Some(rules.hash().to_string()),
            ..DatasetMeta::default()
        },
    };
    set.refresh_meta();
    set
}

/// Under-samples `unknown` sentences (uniformly, without replacement) down to
/// the number of MDD-related sentences. Relative order is preserved.
pub fn balance_unknown(set: &LabeledSet, seed: u64) -> LabeledSet {
    let unknown: Vec<usize> = (0..set.len())
        .filter(|&i| set.sentences[i].label == Label::Unknown)
        .collect();
    let related = set.len() - unknown.len();

    let mut out = if unknown.len() <= related {
        set.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen: HashSet<usize> = sample(&mut rng, unknown.len(), related)
            .into_iter()
            .map(|k| unknown[k])
            .collect();
        let keep: Vec<usize> = (0..set.len())
            .filter(|&i| set.sentences[i].label != Label::Unknown || chosen.contains(&i))
            .collect();
        set.with_subset(&keep)
    };
    out.meta.seeds.insert("balance".into(), seed);
    out.refresh_meta();
    out
}

/// Per-class train counts: each is `floor(f * count)` or one more, chosen by
/// largest remainder so the total is `round(f * n)`.
fn stratified_train_counts(class_counts: &[usize; Label::COUNT], fraction: f64) -> [usize; Label::COUNT] {
    let mut train = [0usize; Label::COUNT];
    let mut remainders = Vec::new();
    let mut total = 0usize;
    for (c, &n) in class_counts.iter().enumerate() {
        if n < 2 {
            continue;
        }
        total += n;
        let exact = fraction * n as f64;
        let base = (exact + 1e-9).floor() as usize;
        train[c] = base.min(n);
        remainders.push((exact - base as f64, c));
    }
    let target = (fraction * total as f64).round() as usize;
    let assigned: usize = train.iter().sum();
    let mut extra = target.saturating_sub(assigned);
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, c) in remainders {
        if extra == 0 {
            break;
        }
        if train[c] < class_counts[c] {
            train[c] += 1;
            extra -= 1;
        }
    }
    train
}

/// Stratified, seeded split into (train, validation).
///
/// A class with fewer than two members cannot be split; it goes to train
/// whole and a warning is logged.
pub fn split_train_validation(set: &LabeledSet, train_fraction: f64, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: [Vec<usize>; Label::COUNT] = Default::default();
    for (i, s) in set.sentences.iter().enumerate() {
        by_class[s.label.index()].push(i);
    }
    let counts = by_class.clone().map(|v| v.len());
    let train_counts = stratified_train_counts(&counts, train_fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; set.len()];
    for label in Label::ALL {
        let members = &mut by_class[label.index()];
        if members.len() < 2 {
            if !members.is_empty() {
                warn!(
                    "class `{label}` has {} member(s); all assigned to train",
                    members.len()
                );
            }
            members.iter().for_each(|&i| in_train[i] = true);
            continue;
        }
        members.shuffle(&mut rng);
        for &i in &members[..train_counts[label.index()]] {
            in_train[i] = true;
        }
    }

    let (train_idx, valid_idx): (Vec<usize>, Vec<usize>) = (0..set.len()).partition(|&i| in_train[i]);
    let mut train = set.with_subset(&train_idx);
    let mut valid = set.with_subset(&valid_idx);
    for (part, role) in [(&mut train, "train"), (&mut valid, "validation")] {
        part.meta.seeds.insert("split".into(), seed);
        part.meta.role = Some(role.into());
        part.refresh_meta();
    }
    Ok((train, valid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub label: Label,
    pub count: usize,
    /// Percentage rounded to one decimal.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub total: usize,
    pub classes: Vec<ClassShare>,
}

impl ClassDistribution {
    pub fn count(&self, label: Label) -> usize {
        self.classes[label.index()].count
    }

    pub fn percent(&self, label: Label) -> f64 {
        self.classes[label.index()].percent
    }

    /// One-row table in class order.
    pub fn render(&self) -> String {
        let mut out = String::from("class");
        for l in Label::ALL {
            out.push_str(&format!("\t{}", l.display_name()));
        }
        out.push_str("\n% of total");
        for c in &self.classes {
            out.push_str(&format!("\t{:.1}%", c.percent));
        }
        out.push('\n');
        out
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn class_distribution(set: &LabeledSet) -> ClassDistribution {
    let total = set.len();
    let classes = Label::ALL
        .iter()
        .map(|&label| {
            let count = set.count(label);
            let percent = if total == 0 {
                0.0
            } else {
                round1(100.0 * count as f64 / total as f64)
            };
            ClassShare { label, count, percent }
        })
        .collect();
    ClassDistribution { total, classes }
}

/// Companion metadata path: the dataset path with `.meta.json` appended.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_dataset(set: &LabeledSet, path: &Path) -> Result<()> {
    jsonl::write_records(path, &set.sentences)?;
    let mut meta = set.meta.clone();
    meta.n_sentences = set.len();
    meta.n_documents = set
        .sentences
        .iter()
        .map(|s| s.doc_id.as_str())
        .collect::<HashSet<_>>()
        .len();
    meta.distribution = Some(class_distribution(set));
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::invalid(e.to_string()))?;
    jsonl::write_string(&meta_path(path), &(json + "\n"))
}

/// Reads a dataset file and, when present, its metadata companion.
pub fn read_dataset(path: &Path) -> Result<LabeledSet> {
    let records: Vec<(usize, LabeledSentence)> = jsonl::read_records(path)?;
    let mut seen = HashSet::new();
    let mut sentences = Vec::with_capacity(records.len());
    for (line, s) in records {
        if !seen.insert(s.sentence_id.clone()) {
            return Err(Error::DuplicateId {
                id: s.sentence_id,
                line,
            });
        }
        sentences.push(s);
    }
    let mp = meta_path(path);
    let meta = if mp.exists() {
        serde_json::from_str(&jsonl::read_string(&mp)?).map_err(|e| Error::Parse {
            path: mp.clone(),
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        DatasetMeta::default()
    };
    Ok(LabeledSet { sentences, meta })
}
