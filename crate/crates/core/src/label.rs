//! The four sentence-level assertion classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Assertion class of a sentence with respect to MDD.
///
/// The declaration order is the canonical class order used for tie-breaking
/// and for every report layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Unknown,
    Positive,
    Possible,
    Negated,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Unknown, Label::Positive, Label::Possible, Label::Negated];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Unknown => "unknown",
            Label::Positive => "positive",
            Label::Possible => "possible",
            Label::Negated => "negated",
        }
    }

    /// Heading used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::Unknown => "unknown",
            Label::Positive => "Positive MDD",
            Label::Possible => "Possible MDD",
            Label::Negated => "Negated MDD",
        }
    }

    pub fn is_mdd_related(self) -> bool {
        self != Label::Unknown
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unknown" => Ok(Label::Unknown),
            "positive" => Ok(Label::Positive),
            "possible" => Ok(Label::Possible),
            "negated" => Ok(Label::Negated),
            other => Err(Error::invalid(format!("unknown label `{other}`"))),
        }
    }
}
