//! Keyword/cue rules that assign weak assertion labels to sentences.
//!
//! A sentence is scanned for concept keywords (leftmost-longest, word-bounded,
//! ASCII case-insensitive). Each surviving mention gets an assertion from the
//! cues in its window, with precedence experiencer > negation > possibility >
//! affirmed; the sentence label then takes the strongest mention under
//! positive > possible > negated. No mention means `unknown`.

mod assertion;
mod spec;

use regex::Regex;

use crate::corpus::Sentence;
use crate::dataset::{LabeledSentence, Source};
use crate::error::{Error, Result};
use crate::label::Label;

pub use assertion::{classify_assertion, MentionAssertion};
pub use spec::{load_rule_spec, CueList, CueSection, ExclusionSection, KeywordSection, RuleSpec};

/// Whitespace class shared by keywords, exclusions and cues.
pub(crate) const WS: &str = "[ \\t\\n\\x0B\\x0C\\r]";

pub(crate) fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Keyword occurrence inside a sentence; offsets are bytes into the sentence text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchSpan {
    pub start: usize,
    pub end: usize,
    pub matched_keyword: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueKind {
    Experiencer,
    Negation,
    Possibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Pre,
    Post,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledCue {
    pub kind: CueKind,
    pub direction: Direction,
    pub regex: Regex,
}

/// Immutable, shareable compiled form of a [`RuleSpec`].
#[derive(Debug, Clone)]
pub struct CompiledRuleSet {
    spec: RuleSpec,
    hash: String,
    keyword_re: Regex,
    /// keyword in normalized form (lowercase, single spaces) to its spec spelling
    keywords: Vec<(String, String)>,
    exclusion_re: Option<Regex>,
    cues: Vec<CompiledCue>,
    window: usize,
}

fn phrase_pattern(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .map(regex::escape)
        .collect::<Vec<_>>()
        .join(&format!("{WS}+"))
}

/// Rewrites literal spaces in a cue regex (outside character classes) to
/// whitespace runs.
fn cue_pattern(pattern: &str) -> String {
    let mut out = String::with_capacity(pattern.len() + 16);
    let mut in_class = false;
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                out.push(c);
                if let Some(n) = chars.next() {
                    out.push(n);
                }
            }
            '[' if !in_class => {
                in_class = true;
                out.push(c);
            }
            ']' if in_class => {
                in_class = false;
                out.push(c);
            }
            ' ' if !in_class => {
                while chars.peek() == Some(&' ') {
                    chars.next();
                }
                out.push_str(WS);
                out.push('+');
            }
            _ => out.push(c),
        }
    }
    out
}

fn build(pattern: &str, source: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|e| Error::Pattern {
        pattern: source.to_string(),
        message: e.to_string(),
    })
}

pub(crate) fn normalize_phrase(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_ascii_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Validates and compiles a rule spec.
pub fn compile_ruleset(spec: &RuleSpec) -> Result<CompiledRuleSet> {
    spec.validate()?;

    let mut keywords: Vec<(String, String)> = spec
        .keywords
        .terms
        .iter()
        .map(|k| (normalize_phrase(k), k.clone()))
        .collect();
    keywords.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    keywords.dedup_by(|a, b| a.0 == b.0);

    // Leftmost-first alternation over longest-first literals yields the
    // leftmost-longest keyword at each start position.
    let alternation = keywords
        .iter()
        .map(|(norm, _)| phrase_pattern(norm))
        .collect::<Vec<_>>()
        .join("|");
    let keyword_re = build(
        &format!(r"(?i-u)\b(?:{alternation})\b"),
        &spec.keywords.terms.join(", "),
    )?;

    let exclusion_re = if spec.exclusions.suffixes.is_empty() {
        None
    } else {
        let alts = spec
            .exclusions
            .suffixes
            .iter()
            .map(|s| phrase_pattern(s))
            .collect::<Vec<_>>()
            .join("|");
        Some(build(
            &format!(r"(?i-u)\A{WS}+(?:{alts})"),
            &spec.exclusions.suffixes.join(", "),
        )?)
    };

    let mut cues = Vec::new();
    let sections = [
        (CueKind::Experiencer, &spec.cues.experiencer),
        (CueKind::Negation, &spec.cues.negation),
        (CueKind::Possibility, &spec.cues.possibility),
    ];
    for (kind, list) in sections {
        for (direction, patterns) in [(Direction::Pre, &list.pre), (Direction::Post, &list.post)] {
            for p in patterns {
                // Validate the pattern on its own first so errors name it exactly.
                build(p, p)?;
                let regex = build(&format!(r"(?i-u)\b(?:{})\b", cue_pattern(p)), p)?;
                cues.push(CompiledCue {
                    kind,
                    direction,
                    regex,
                });
            }
        }
    }

    Ok(CompiledRuleSet {
        spec: spec.clone(),
        hash: spec.hash(),
        keyword_re,
        keywords,
        exclusion_re,
        cues,
        window: spec.cues.window,
    })
}

impl CompiledRuleSet {
    /// The shipped ruleset.
    pub fn default_rules() -> Self {
        compile_ruleset(&RuleSpec::default_spec()).expect("shipped rules compile")
    }

    pub fn spec(&self) -> &RuleSpec {
        &self.spec
    }

    /// Hex SHA-256 of the canonical spec; recorded in dataset provenance.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub(crate) fn cues(&self) -> &[CompiledCue] {
        &self.cues
    }

    /// Keyword mentions in `text`, skipping those followed by an exclusion suffix.
    pub fn find_mentions(&self, text: &str) -> Vec<MatchSpan> {
        self.keyword_re
            .find_iter(text)
            .filter(|m| {
                self.exclusion_re
                    .as_ref()
                    .is_none_or(|ex| !ex.is_match(&text[m.end()..]))
            })
            .map(|m| {
                let norm = normalize_phrase(m.as_str());
                let keyword = self
                    .keywords
                    .iter()
                    .find(|(n, _)| *n == norm)
                    .map(|(_, k)| k.clone())
                    .unwrap_or(norm);
                MatchSpan {
                    start: m.start(),
                    end: m.end(),
                    matched_keyword: keyword,
                }
            })
            .collect()
    }

    /// Label for a bare piece of text.
    pub fn label_text(&self, text: &str) -> Label {
        let spans = self.find_mentions(text);
        assertion::aggregate(text, &spans, self)
    }
}

pub fn find_concept_mentions(sentence: &Sentence, rules: &CompiledRuleSet) -> Vec<MatchSpan> {
    rules.find_mentions(&sentence.text)
}

/// Weak label for one sentence. Total: every sentence gets exactly one label.
pub fn label_sentence(sentence: &Sentence, rules: &CompiledRuleSet) -> LabeledSentence {
    LabeledSentence {
        sentence_id: sentence.sentence_id.clone(),
        doc_id: sentence.doc_id.clone(),
        text: sentence.text.clone(),
        label: rules.label_text(&sentence.text),
        source: Source::Weak,
    }
}
