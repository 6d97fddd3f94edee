//! Documents, sentence segmentation and the corpus JSONL format.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Abbreviations whose trailing period never ends a sentence. Compared
/// case-insensitively against the whitespace-delimited word ending in the period.
pub const ABBREVIATIONS: &[&str] = &["dr.", "mr.", "mrs.", "ms.", "hx.", "e.g.", "i.e.", "vs."];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            patient_id: None,
        }
    }
}

/// A trimmed sentence span of a document. `start..end` are byte offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Sentence {
    /// A free-standing sentence not tied to a document, spanning all of `text`.
    pub fn standalone(text: impl Into<String>) -> Self {
        let text = text.into();
        Sentence {
            sentence_id: "adhoc#0".to_string(),
            doc_id: "adhoc".to_string(),
            start: 0,
            end: text.len(),
            text,
        }
    }
}

pub fn sentence_id(doc_id: &str, index: usize) -> String {
    format!("{doc_id}#{index}")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, doc) in documents.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(Error::invalid(format!("document {} has an empty doc_id", i + 1)));
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::DuplicateId {
                    id: doc.doc_id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }
}

fn is_terminator(b: u8) -> bool {
    matches!(b, b'.' | b'!' | b'?')
}

fn is_closer(b: u8) -> bool {
    matches!(b, b'"' | b'\'' | b')' | b']')
}

fn is_abbreviation(text: &str, seg_start: usize, dot: usize) -> bool {
    let head = &text[seg_start..=dot];
    let word_start = head
        .rfind(|c: char| c.is_whitespace())
        .map(|p| p + head[p..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = head[word_start..].trim_start_matches(['(', '"', '\'', '[']);
    ABBREVIATIONS.iter().any(|a| word.eq_ignore_ascii_case(a))
}

/// Byte ranges `[start, end)` of raw segments before trimming.
fn raw_segments(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let len = bytes.len();
    let mut out = Vec::new();
    let mut seg_start = 0;
    let mut i = 0;
    while i < len {
        let b = bytes[i];
        if b == b'\n' {
            let mut j = i + 1;
            while j < len && matches!(bytes[j], b' ' | b'\t' | b'\r') {
                j += 1;
            }
            if j < len && bytes[j] == b'\n' {
                out.push((seg_start, i));
                seg_start = j + 1;
                i = j + 1;
                continue;
            }
        } else if is_terminator(b) {
            let mut j = i + 1;
            while j < len && is_terminator(bytes[j]) {
                j += 1;
            }
            while j < len && is_closer(bytes[j]) {
                j += 1;
            }
            let at_break = j == len || bytes[j].is_ascii_whitespace();
            let single_period = b == b'.' && j == i + 1;
            let decimal = b == b'.'
                && i > 0
                && bytes[i - 1].is_ascii_digit()
                && j < len
                && bytes[j].is_ascii_digit();
            if at_break && !decimal && !(single_period && is_abbreviation(text, seg_start, i)) {
                out.push((seg_start, j));
                seg_start = j;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    out.push((seg_start, len));
    out
}

/// Splits a document into trimmed, ordered, non-overlapping sentences.
///
/// Boundaries fall after runs of `.`, `!` or `?` (plus any closing quotes or
/// brackets) that are followed by whitespace or end of text, and at blank
/// lines. A lone period ending one of [`ABBREVIATIONS`] does not split.
pub fn segment_sentences(doc: &Document) -> Vec<Sentence> {
    let text = doc.text.as_str();
    raw_segments(text)
        .into_iter()
        .filter_map(|(s, e)| {
            let raw = &text[s..e];
            let trimmed = raw.trim_start();
            let start = s + (raw.len() - trimmed.len());
            let trimmed = trimmed.trim_end();
            if trimmed.is_empty() {
                None
            } else {
                Some((start, start + trimmed.len()))
            }
        })
        .enumerate()
        .map(|(idx, (start, end))| Sentence {
            sentence_id: sentence_id(&doc.doc_id, idx),
            doc_id: doc.doc_id.clone(),
            start,
            end,
            text: text[start..end].to_string(),
        })
        .collect()
}

/// Reads a corpus JSONL file (`doc_id`, `text`, optional `patient_id`).
pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let records: Vec<(usize, Document)> = jsonl::read_records(path)?;
    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(records.len());
    for (line, doc) in records {
        if doc.doc_id.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "empty doc_id".into(),
            });
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateId { id: doc.doc_id, line });
        }
        docs.push(doc);
    }
    Ok(Corpus { documents: docs })
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    jsonl::write_records(path, corpus.documents())
}
