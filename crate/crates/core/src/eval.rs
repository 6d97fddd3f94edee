//! Scoring predictions against gold labels: confusion matrices, per-class
//! precision/recall/F1, a model comparison table and a per-sentence
//! correct/not-correct listing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::label::Label;

/// One line of a predictions file. `scores`, when present, holds one value
/// per class in class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sentence_id: String,
    pub predicted_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl Prediction {
    pub fn new(sentence_id: impl Into<String>, predicted_label: Label) -> Self {
        Prediction {
            sentence_id: sentence_id.into(),
            predicted_label,
            scores: None,
        }
    }
}

pub fn write_predictions(predictions: &[Prediction], path: &Path) -> Result<()> {
    jsonl::write_records(path, predictions)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (line, p) in jsonl::read_records::<Prediction>(path)? {
        if let Some(scores) = &p.scores {
            if scores.len() != Label::COUNT || scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("scores must be {} finite numbers", Label::COUNT),
                });
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Counts indexed `[gold][predicted]` in class order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; Label::COUNT]; Label::COUNT],
}

impl ConfusionMatrix {
    pub fn from_pairs<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> Self {
        let mut m = ConfusionMatrix::default();
        for (gold, pred) in pairs {
            m.counts[gold.index()][pred.index()] += 1;
        }
        m
    }

    pub fn get(&self, gold: Label, predicted: Label) -> u64 {
        self.counts[gold.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn gold_count(&self, class: Label) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    pub fn predicted_count(&self, class: Label) -> u64 {
        self.counts.iter().map(|row| row[class.index()]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..Label::COUNT).map(|c| self.counts[c][c]).sum();
        ratio(correct, self.total())
    }

    /// Pooled true positives over pooled (true positives + false negatives).
    pub fn micro_recall(&self) -> f64 {
        let tp: u64 = Label::ALL.iter().map(|&c| self.get(c, c)).sum();
        let fn_: u64 = Label::ALL.iter().map(|&c| self.gold_count(c) - self.get(c, c)).sum();
        ratio(tp, tp + fn_)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<14}", "gold \\ pred");
        for l in Label::ALL {
            let _ = write!(s, "{:>14}", l.display_name());
        }
        s.push('\n');
        for g in Label::ALL {
            let _ = write!(s, "{:<14}", g.display_name());
            for p in Label::ALL {
                let _ = write!(s, "{:>14}", self.get(g, p));
            }
            s.push('\n');
        }
        s
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Pairs every gold sentence with its prediction. Fails when any gold id
/// lacks a prediction, any id is predicted twice, or a prediction names a
/// sentence that is not in the gold set.
pub fn confusion(gold: &LabeledSet, predictions: &[Prediction]) -> Result<ConfusionMatrix> {
    let by_id = index_predictions(gold, predictions)?;
    Ok(ConfusionMatrix::from_pairs(
        gold.sentences.iter().map(|s| (s.label, by_id[s.sentence_id.as_str()])),
    ))
}

fn index_predictions<'a>(gold: &LabeledSet, predictions: &'a [Prediction]) -> Result<BTreeMap<&'a str, Label>> {
    let mut by_id = BTreeMap::new();
    let mut duplicate = BTreeSet::new();
    for p in predictions {
        if by_id.insert(p.sentence_id.as_str(), p.predicted_label).is_some() {
            duplicate.insert(p.sentence_id.as_str());
        }
    }
    let gold_ids: BTreeSet<&str> = gold.sentences.iter().map(|s| s.sentence_id.as_str()).collect();
    let missing: Vec<&str> = gold_ids.iter().copied().filter(|id| !by_id.contains_key(id)).collect();
    let extra: Vec<&str> = by_id.keys().copied().filter(|id| !gold_ids.contains(id)).collect();
    if missing.is_empty() && extra.is_empty() && duplicate.is_empty() {
        return Ok(by_id);
    }
    let mut parts = Vec::new();
    for (what, ids) in [
        ("missing", missing),
        ("duplicate", duplicate.into_iter().collect()),
        ("not in gold set", extra),
    ] {
        if !ids.is_empty() {
            parts.push(format!("{what} ({}): {}", ids.len(), list_ids(&ids)));
        }
    }
    Err(Error::IdMismatch(parts.join("; ")))
}

fn list_ids(ids: &[&str]) -> String {
    const SHOWN: usize = 10;
    let mut s = ids.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        let _ = write!(s, ", ... {} more", ids.len() - SHOWN);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Precision, recall and F1 per class; any zero denominator gives 0.
pub fn per_class_metrics(m: &ConfusionMatrix) -> Vec<ClassMetrics> {
    Label::ALL
        .iter()
        .map(|&c| {
            let tp = m.get(c, c);
            let precision = ratio(tp, m.predicted_count(c));
            let recall = ratio(tp, m.gold_count(c));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: c,
                precision,
                recall,
                f1,
                support: m.gold_count(c),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset_fingerprint: String,
    pub confusion: ConfusionMatrix,
    pub classes: Vec<ClassMetrics>,
}

impl EvalReport {
    pub fn new(model: impl Into<String>, dataset_fingerprint: impl Into<String>, confusion: ConfusionMatrix) -> Self {
        EvalReport {
            model: model.into(),
            dataset_fingerprint: dataset_fingerprint.into(),
            classes: per_class_metrics(&confusion),
            confusion,
        }
    }

    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.classes[label.index()]
    }

    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }
}

/// Scores one model's predictions against `gold`.
pub fn evaluate(model: &str, gold: &LabeledSet, predictions: &[Prediction]) -> Result<EvalReport> {
    Ok(EvalReport::new(model, fingerprint(gold), confusion(gold, predictions)?))
}

/// Short content hash of a labeled set (ids, texts and labels).
pub fn fingerprint(set: &LabeledSet) -> String {
    let mut bytes = Vec::new();
    for s in &set.sentences {
        for part in [s.sentence_id.as_str(), s.text.as_str(), s.label.as_str()] {
            bytes.extend_from_slice(part.as_bytes());
            bytes.push(0x1f);
        }
        bytes.push(b'\n');
    }
    jsonl::sha256_hex(&bytes)[..16].to_string()
}

/// Comparison table: one row per model (in the order given), a P/R/F1 column
/// group per class, values at two decimals.
pub fn render_comparison_text(reports: &[EvalReport]) -> String {
    let name_width = reports.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5) + 2;
    let group_width = 18;
    let mut s = format!("{:<name_width$}", "MODEL");
    for l in Label::ALL {
        let _ = write!(s, "{:<group_width$}", l.display_name());
    }
    s = s.trim_end().to_string();
    s.push('\n');
    let mut sub = " ".repeat(name_width);
    for _ in Label::ALL {
        let _ = write!(sub, "{:<6}{:<6}{:<6}", "P", "R", "F1");
    }
    s.push_str(sub.trim_end());
    s.push('\n');
    for r in reports {
        let mut row = format!("{:<name_width$}", r.model);
        for c in &r.classes {
            let _ = write!(row, "{:<6}{:<6}{:<6}", two(c.precision), two(c.recall), two(c.f1));
        }
        s.push_str(row.trim_end());
        s.push('\n');
    }
    s
}

fn two(v: f64) -> String {
    format!("{v:.2}")
}

/// Same table at full precision, plus supports, accuracy and the dataset
/// fingerprint.
pub fn render_comparison_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("model,dataset");
    for l in Label::ALL {
        let n = l.as_str();
        let _ = write!(s, ",{n}_precision,{n}_recall,{n}_f1,{n}_support");
    }
    s.push_str(",accuracy\n");
    for r in reports {
        let _ = write!(s, "{},{}", csv_field(&r.model), r.dataset_fingerprint);
        for c in &r.classes {
            let _ = write!(s, ",{},{},{},{}", c.precision, c.recall, c.f1, c.support);
        }
        let _ = writeln!(s, ",{}", r.accuracy());
    }
    s
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

/// Per gold class, up to `max_per_class` sentences with a `C` (correct) or
/// `NC` (not correct) mark per model. Sentences that some model gets wrong
/// are listed first; within each group gold order is kept.
pub fn error_listing(gold: &LabeledSet, models: &[(String, Vec<Prediction>)], max_per_class: usize) -> Result<String> {
    if models.is_empty() {
        return Err(Error::invalid("error listing needs at least one model"));
    }
    let indexed = models
        .iter()
        .map(|(_, p)| index_predictions(gold, p))
        .collect::<Result<Vec<_>>>()?;
    let mut s = String::new();
    if max_per_class == 0 {
        return Ok(s);
    }
    s.push_str("Examples");
    for (name, _) in models {
        let _ = write!(s, "\t{name}");
    }
    s.push('\n');
    for (ci, class) in Label::ALL.iter().enumerate() {
        let marks = |id: &str| -> Vec<bool> { indexed.iter().map(|m| m[id] == *class).collect() };
        let members: Vec<_> = gold.sentences.iter().filter(|s| s.label == *class).collect();
        let (wrong, right): (Vec<_>, Vec<_>) = members.into_iter().partition(|s| marks(&s.sentence_id).contains(&false));
        let _ = writeln!(s, "{}) {}", (b'a' + ci as u8) as char, class.display_name());
        for (i, sent) in wrong.iter().chain(right.iter()).take(max_per_class).enumerate() {
            let _ = write!(s, "{}. {}", i + 1, sent.text.replace(['\t', '\n'], " "));
            for ok in marks(&sent.sentence_id) {
                s.push('\t');
                s.push_str(if ok { "C" } else { "NC" });
            }
            s.push('\n');
        }
    }
    Ok(s)
}
