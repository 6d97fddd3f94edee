//! Case/control cohort assignment from diagnosis code histories.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

const DEFAULT_CODES: &str = include_str!("../data/mdd_icd_codes.txt");

pub fn normalize_code(code: &str) -> String {
    code.trim().to_ascii_uppercase()
}

/// Normalized, deduplicated set of MDD-related codes. Matching is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcdCodeSet {
    codes: BTreeSet<String>,
}

impl IcdCodeSet {
    /// Parses one code per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let codes: BTreeSet<String> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .map(normalize_code)
            .filter(|c| !c.is_empty())
            .collect();
        if codes.is_empty() {
            return Err(Error::invalid("ICD code set is empty"));
        }
        Ok(IcdCodeSet { codes })
    }

    /// The shipped MDD code list.
    pub fn default_mdd() -> Self {
        Self::parse(DEFAULT_CODES).expect("shipped code list is valid")
    }

    pub fn contains(&self, code: &str) -> bool {
        self.codes.contains(&normalize_code(code))
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.codes.iter().map(String::as_str)
    }
}

pub fn load_icd_codeset(path: &Path) -> Result<IcdCodeSet> {
    IcdCodeSet::parse(&jsonl::read_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    #[serde(default)]
    pub icd_codes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Case,
    Control,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortAssignment {
    pub patient_id: String,
    pub cohort: Cohort,
}

/// Number of MDD code occurrences in a record, counting repeats.
pub fn mdd_code_count(record: &PatientRecord, codes: &IcdCodeSet) -> usize {
    record.icd_codes.iter().filter(|c| codes.contains(c)).count()
}

/// Two or more MDD code occurrences make a case, none make a control, and a
/// single occurrence leaves the patient out of both cohorts.
pub fn classify_patient(record: &PatientRecord, codes: &IcdCodeSet) -> Cohort {
    match mdd_code_count(record, codes) {
        0 => Cohort::Control,
        1 => Cohort::Excluded,
        _ => Cohort::Case,
    }
}

pub fn select_cohort(records: &[PatientRecord], codes: &IcdCodeSet) -> Result<Vec<CohortAssignment>> {
    if codes.is_empty() {
        return Err(Error::invalid("ICD code set is empty"));
    }
    let mut seen = HashSet::new();
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.patient_id.is_empty() {
                return Err(Error::invalid(format!("record {} has an empty patient_id", i + 1)));
            }
            if !seen.insert(r.patient_id.as_str()) {
                return Err(Error::DuplicateId {
                    id: r.patient_id.clone(),
                    line: i + 1,
                });
            }
            Ok(CohortAssignment {
                patient_id: r.patient_id.clone(),
                cohort: classify_patient(r, codes),
            })
        })
        .collect()
}

/// Seeded draw of up to `n_cases` cases and `n_controls` controls, in input order.
pub fn sample_cohort(
    assignments: &[CohortAssignment],
    n_cases: usize,
    n_controls: usize,
    seed: u64,
) -> Vec<CohortAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (cohort, n) in [(Cohort::Case, n_cases), (Cohort::Control, n_controls)] {
        let pool: Vec<usize> = assignments
            .iter()
            .enumerate()
            .filter(|(_, a)| a.cohort == cohort)
            .map(|(i, _)| i)
            .collect();
        let n = n.min(pool.len());
        keep.extend(sample(&mut rng, pool.len(), n).into_iter().map(|k| pool[k]));
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| assignments[i].clone()).collect()
}

pub fn read_patients(path: &Path) -> Result<Vec<PatientRecord>> {
    Ok(jsonl::read_records(path)?.into_iter().map(|(_, r)| r).collect())
}
