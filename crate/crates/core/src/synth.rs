//! Synthetic clinical-note corpora with planted gold labels.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{segment_sentences, Corpus, Document};
use crate::dataset::{LabeledSentence, LabeledSet, Source};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::label::Label;
use crate::rules::CompiledRuleSet;

const DEFAULT_TEMPLATES: &str = include_str!("../data/default_templates.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub class: Label,
    pub text: String,
}

/// Template whose gold class differs from what the rules assign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardTemplate {
    pub gold: Label,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateBank {
    #[serde(default)]
    pub slots: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub templates: Vec<Template>,
    #[serde(default)]
    pub hard: Vec<HardTemplate>,
}

impl TemplateBank {
    pub fn default_bank() -> Self {
        Self::from_toml_str(DEFAULT_TEMPLATES).expect("shipped templates parse")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::invalid(format!("template bank: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&jsonl::read_string(path)?)
    }

    fn consistent_for(&self, class: Label) -> Vec<&str> {
        self.templates
            .iter()
            .filter(|t| t.class == class)
            .map(|t| t.text.as_str())
            .collect()
    }

    fn hard_for(&self, class: Label) -> Vec<&str> {
        self.hard
            .iter()
            .filter(|t| t.gold == class)
            .map(|t| t.text.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
    Fixed(String),
}

fn parse_template(text: &str) -> Result<Vec<Piece>> {
    let mut pieces = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Text(rest[..open].to_string()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::invalid(format!("unclosed slot in template `{text}`")))?
            + open;
        let inner = &rest[open + 1..close];
        match inner.split_once('=') {
            Some((_, fixed)) => pieces.push(Piece::Fixed(fixed.to_string())),
            None if inner.is_empty() => {
                return Err(Error::invalid(format!("empty slot in template `{text}`")))
            }
            None => pieces.push(Piece::Slot(inner.to_string())),
        }
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest.to_string()));
    }
    Ok(pieces)
}

fn is_literal_cue(p: &str) -> bool {
    !p.chars().any(|c| "\\^$.|?*+()[]{}".contains(c))
}

/// Slot name to filler list: ruleset-derived slots plus the bank's own.
fn fillers(bank: &TemplateBank, rules: &CompiledRuleSet) -> BTreeMap<String, Vec<String>> {
    let spec = rules.spec();
    let literal = |v: &[String]| -> Vec<String> { v.iter().filter(|p| is_literal_cue(p)).cloned().collect() };
    let mut map = BTreeMap::new();
    map.insert("keyword".to_string(), spec.keywords.terms.clone());
    map.insert("negcue".to_string(), literal(&spec.cues.negation.pre));
    map.insert("posscue".to_string(), literal(&spec.cues.possibility.pre));
    map.insert("expcue".to_string(), literal(&spec.cues.experiencer.pre));
    for (k, v) in &bank.slots {
        map.insert(k.clone(), v.clone());
    }
    map
}

fn render_random(
    pieces: &[Piece],
    fillers: &BTreeMap<String, Vec<String>>,
    rng: &mut ChaCha8Rng,
) -> Result<String> {
    let mut out = String::new();
    for p in pieces {
        match p {
            Piece::Text(t) | Piece::Fixed(t) => out.push_str(t),
            Piece::Slot(name) => {
                let options = fillers
                    .get(name)
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| Error::invalid(format!("no fillers for slot `{name}`")))?;
                out.push_str(&options[rng.gen_range(0..options.len())]);
            }
        }
    }
    Ok(out)
}

/// Every instantiation of a template over all filler combinations.
fn render_all(pieces: &[Piece], fillers: &BTreeMap<String, Vec<String>>) -> Result<Vec<String>> {
    let mut partial = vec![String::new()];
    for p in pieces {
        match p {
            Piece::Text(t) | Piece::Fixed(t) => partial.iter_mut().for_each(|s| s.push_str(t)),
            Piece::Slot(name) => {
                let options = fillers
                    .get(name)
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| Error::invalid(format!("no fillers for slot `{name}`")))?;
                partial = partial
                    .iter()
                    .flat_map(|s| options.iter().map(move |o| format!("{s}{o}")))
                    .collect();
            }
        }
    }
    Ok(partial)
}

/// Class mix as fractions in class order (unknown, positive, possible, negated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMix(pub [f64; 4]);

impl ClassMix {
    /// Class shares of a balanced weak-labeled training set.
    pub const TRAIN: ClassMix = ClassMix([0.5, 0.445, 0.036, 0.019]);
    /// Class shares of a gold-annotated test set; unknown takes the remainder.
    pub const TEST: ClassMix = ClassMix([1.0 - 0.00825 - 0.00087 - 0.00066, 0.00825, 0.00087, 0.00066]);
    /// A raw note collection with excess unknowns whose MDD-related part keeps
    /// the `TRAIN` proportions, so under-sampling lands on `TRAIN`.
    pub const RAW: ClassMix = ClassMix([0.6, 0.356, 0.0288, 0.0152]);

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("class mix entries must lie in [0, 1]"));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("class mix sums to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Exact per-class counts for `n` items by largest remainder.
    pub fn quotas(&self, n: usize) -> [usize; 4] {
        let mut q = [0usize; 4];
        let mut rem: Vec<(f64, usize)> = Vec::with_capacity(4);
        for (c, (slot, share)) in q.iter_mut().zip(self.0).enumerate() {
            let exact = share * n as f64;
            *slot = exact.floor() as usize;
            rem.push((exact - *slot as f64, c));
        }
        let mut left = n - q.iter().sum::<usize>();
        rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, c) in rem.into_iter().cycle() {
            if left == 0 {
                break;
            }
            q[c] += 1;
            left -= 1;
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_documents: usize,
    /// Inclusive range of sentences per document.
    pub sentences_per_document: (usize, usize),
    /// When set, documents are generated until exactly this many sentences exist.
    #[serde(default)]
    pub n_sentences: Option<usize>,
    pub class_mix: ClassMix,
    pub hard_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub doc_prefix: String,
}

fn default_prefix() -> String {
    "doc".into()
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_documents: 100,
            sentences_per_document: (5, 15),
            n_sentences: None,
            class_mix: ClassMix::TEST,
            hard_fraction: 0.0,
            seed: 0,
            doc_prefix: default_prefix(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        self.class_mix.validate()?;
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return Err(Error::invalid("hard_fraction must lie in [0, 1]"));
        }
        let (lo, hi) = self.sentences_per_document;
        if lo == 0 || lo > hi {
            return Err(Error::invalid("sentences_per_document must satisfy 1 <= min <= max"));
        }
        Ok(())
    }
}

/// Generates a corpus and its aligned gold labels.
///
/// Class counts follow the mix exactly (largest remainder), and
/// `round(hard_fraction * n)` sentences come from hard templates where the
/// bank has one for the sentence's class.
pub fn generate_corpus(
    config: &GenerationConfig,
    bank: &TemplateBank,
    rules: &CompiledRuleSet,
) -> Result<(Corpus, LabeledSet)> {
    config.validate()?;
    let fill = fillers(bank, rules);
    let consistent: Vec<Vec<Vec<Piece>>> = Label::ALL
        .iter()
        .map(|&l| bank.consistent_for(l).into_iter().map(parse_template).collect())
        .collect::<Result<_>>()?;
    let hard: Vec<Vec<Vec<Piece>>> = Label::ALL
        .iter()
        .map(|&l| bank.hard_for(l).into_iter().map(parse_template).collect())
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.sentences_per_document;
    let mut sizes = Vec::new();
    match config.n_sentences {
        Some(total) => {
            let mut acc = 0;
            while acc < total {
                let k = rng.gen_range(lo..=hi).min(total - acc);
                sizes.push(k);
                acc += k;
            }
        }
        None => {
            for _ in 0..config.n_documents {
                sizes.push(rng.gen_range(lo..=hi));
            }
        }
    }
    let n: usize = sizes.iter().sum();

    let quotas = config.class_mix.quotas(n);
    for label in Label::ALL {
        if quotas[label.index()] > 0 && consistent[label.index()].is_empty() {
            return Err(Error::invalid(format!("template bank has no templates for class `{label}`")));
        }
    }
    let mut classes: Vec<Label> = Label::ALL
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, quotas[l.index()]))
        .collect();
    classes.shuffle(&mut rng);

    let n_hard = (config.hard_fraction * n as f64).round() as usize;
    let mut is_hard = vec![false; n];
    for i in sample(&mut rng, n, n_hard.min(n)) {
        is_hard[i] = true;
    }

    let mut rendered = Vec::with_capacity(n);
    for (i, &class) in classes.iter().enumerate() {
        let pool = if is_hard[i] && !hard[class.index()].is_empty() {
            &hard[class.index()]
        } else {
            &consistent[class.index()]
        };
        let template = &pool[rng.gen_range(0..pool.len())];
        rendered.push(render_random(template, &fill, &mut rng)?);
    }

    let width = sizes.len().max(1).to_string().len().max(5);
    let mut documents = Vec::with_capacity(sizes.len());
    let mut gold = Vec::with_capacity(n);
    let mut cursor = 0;
    for (d, &k) in sizes.iter().enumerate() {
        let doc_id = format!("{}-{:0width$}", config.doc_prefix, d, width = width);
        let parts = &rendered[cursor..cursor + k];
        let doc = Document::new(doc_id, parts.join(" "));
        let sentences = segment_sentences(&doc);
        if sentences.len() != k || sentences.iter().zip(parts).any(|(s, p)| s.text != *p) {
            return Err(Error::invalid(format!(
                "templates in document {} do not segment one sentence per template",
                doc.doc_id
            )));
        }
        for (s, &label) in sentences.into_iter().zip(&classes[cursor..cursor + k]) {
            gold.push(LabeledSentence {
                sentence_id: s.sentence_id,
                doc_id: s.doc_id,
                text: s.text,
                label,
                source: Source::Gold,
            });
        }
        documents.push(doc);
        cursor += k;
    }

    let corpus = Corpus::new(documents)?;
    let mut gold = LabeledSet::new(gold)?;
    gold.meta.seeds.insert("generator".into(), config.seed);
    gold.meta.role = Some("gold".into());
    gold.refresh_meta();
    Ok((corpus, gold))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BankViolation {
    pub template: String,
    pub rendered: String,
    pub declared: Label,
    pub got: Label,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BankReport {
    /// Number of rendered sentences checked.
    pub checked: usize,
    /// Rule-consistent instantiations that the rules label differently, or
    /// that do not segment as a single sentence.
    pub violations: Vec<BankViolation>,
    /// Hard instantiations the rules happen to label correctly.
    pub non_divergent_hard: Vec<BankViolation>,
}

impl BankReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn single_sentence(text: &str) -> bool {
    let s = segment_sentences(&Document::new("t", text));
    s.len() == 1 && s[0].text == text
}

/// Instantiates every template with every filler combination and checks it
/// against the rules.
pub fn validate_bank(bank: &TemplateBank, rules: &CompiledRuleSet) -> Result<BankReport> {
    let fill = fillers(bank, rules);
    let mut report = BankReport::default();
    for t in &bank.templates {
        for text in render_all(&parse_template(&t.text)?, &fill)? {
            report.checked += 1;
            let got = rules.label_text(&text);
            let reason = if got != t.class {
                "rule label differs from declared class"
            } else if !single_sentence(&text) {
                "does not segment as one sentence"
            } else {
                continue;
            };
            report.violations.push(BankViolation {
                template: t.text.clone(),
                rendered: text,
                declared: t.class,
                got,
                reason: reason.into(),
            });
        }
    }
    for t in &bank.hard {
        for text in render_all(&parse_template(&t.text)?, &fill)? {
            report.checked += 1;
            let got = rules.label_text(&text);
            if !single_sentence(&text) {
                report.violations.push(BankViolation {
                    template: t.text.clone(),
                    rendered: text,
                    declared: t.gold,
                    got,
                    reason: "does not segment as one sentence".into(),
                });
            } else if got == t.gold {
                report.non_divergent_hard.push(BankViolation {
                    template: t.text.clone(),
                    rendered: text,
                    declared: t.gold,
                    got,
                    reason: "rules agree with gold".into(),
                });
            }
        }
    }
    Ok(report)
}
