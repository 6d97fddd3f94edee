use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

const DEFAULT_RULES: &str = include_str!("../../data/default_rules.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSection {
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionSection {
    #[serde(default)]
    pub suffixes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueList {
    #[serde(default)]
    pub pre: Vec<String>,
    #[serde(default)]
    pub post: Vec<String>,
}

fn default_window() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueSection {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub negation: CueList,
    #[serde(default)]
    pub possibility: CueList,
    #[serde(default)]
    pub experiencer: CueList,
}

/// Rule configuration as read from TOML (`[keywords]`, `[exclusions]`,
/// `[cues.negation]`, `[cues.possibility]`, `[cues.experiencer]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub keywords: KeywordSection,
    #[serde(default)]
    pub exclusions: ExclusionSection,
    pub cues: CueSection,
}

impl RuleSpec {
    pub fn default_spec() -> Self {
        Self::from_toml_str(DEFAULT_RULES).expect("shipped rules parse")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::invalid(format!("rule spec: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("rule spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.keywords.terms.is_empty() {
            return Err(Error::invalid("rule spec has no keywords"));
        }
        for k in &self.keywords.terms {
            let t = k.trim();
            if t.is_empty() {
                return Err(Error::invalid("empty keyword"));
            }
            if t.chars().any(|c| c.is_uppercase()) {
                return Err(Error::invalid(format!("keyword `{k}` must be lowercase")));
            }
            let bytes = t.as_bytes();
            if !super::is_word_byte(bytes[0]) || !super::is_word_byte(bytes[bytes.len() - 1]) {
                return Err(Error::invalid(format!(
                    "keyword `{k}` must start and end with an ASCII letter or digit"
                )));
            }
        }
        if self.exclusions.suffixes.iter().any(|s| s.trim().is_empty()) {
            return Err(Error::invalid("empty exclusion suffix"));
        }
        if self.cues.window == 0 {
            return Err(Error::invalid("cue window must be at least 1"));
        }
        let lists = [&self.cues.negation, &self.cues.possibility, &self.cues.experiencer];
        if lists
            .iter()
            .flat_map(|l| l.pre.iter().chain(&l.post))
            .any(|c| c.trim().is_empty())
        {
            return Err(Error::invalid("empty cue pattern"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("rule spec serializes");
        jsonl::sha256_hex(&canonical)
    }
}

pub fn load_rule_spec(path: &Path) -> Result<RuleSpec> {
    let text = jsonl::read_string(path)?;
    RuleSpec::from_toml_str(&text).map_err(|e| match e {
        Error::Invalid(m) => Error::invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}
