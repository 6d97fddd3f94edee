//! Conventional classifiers over pooled sentence vectors: k-nearest
//! neighbours, one-vs-rest linear SVM and a random forest.
//!
//! Ties are always resolved by class order (unknown, positive, possible,
//! negated). Training first sorts rows by sentence id, so a model depends on
//! the set of training rows and the seed, not on row order.

mod forest;
mod knn;
mod svm;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSet;
use crate::embeddings::{embed_sentence, EmbeddingModel};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::label::Label;
use crate::scalar::Scalar;

pub use forest::{train_random_forest, DecisionTree, ForestConfig, ForestModel, TreeNode};
pub use knn::{train_knn, KnnModel};
pub use svm::{train_linear_svm, SvmConfig, SvmModel};

/// `n x dim` row-major features with aligned labels and sentence ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureMatrix<F: Scalar> {
    dim: usize,
    values: Vec<F>,
    labels: Vec<Label>,
    ids: Vec<String>,
}

impl<F: Scalar> FeatureMatrix<F> {
    pub fn new(dim: usize, values: Vec<F>, labels: Vec<Label>, ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        let n = labels.len();
        if ids.len() != n || values.len() != n * dim {
            return Err(Error::invalid(format!(
                "feature matrix shape mismatch: {} values, {} labels, {} ids, dim {dim}",
                values.len(),
                n,
                ids.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        Ok(FeatureMatrix {
            dim,
            values,
            labels,
            ids,
        })
    }

    /// Builds rows from explicit vectors; ids default to the row index.
    pub fn from_rows(rows: &[Vec<F>], labels: Vec<Label>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("rows have differing lengths"));
        }
        let ids = (0..rows.len()).map(|i| format!("{i:08}")).collect();
        Self::new(dim, rows.concat(), labels, ids)
    }

    /// Mean-pooled sentence embeddings for every sentence of `set`.
    pub fn from_labeled(set: &LabeledSet, model: &EmbeddingModel<F>) -> Result<Self> {
        let mut values = Vec::with_capacity(set.len() * model.dim());
        for s in &set.sentences {
            values.extend(embed_sentence(model, &s.text));
        }
        Self::new(
            model.dim(),
            values,
            set.labels(),
            set.sentences.iter().map(|s| s.sentence_id.clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Rows reordered by sentence id (stable for equal ids).
    pub fn canonical(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        self.select(&order)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            dim: self.dim,
            values,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
        }
    }

    pub(crate) fn class_counts(&self) -> [usize; Label::COUNT] {
        let mut c = [0; Label::COUNT];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }
}

/// Index of the largest count, first in class order on ties.
pub(crate) fn majority(counts: &[usize; Label::COUNT]) -> Label {
    let mut best = 0;
    for c in 1..Label::COUNT {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    Label::ALL[best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierModel<F: Scalar> {
    Knn(KnnModel<F>),
    LinearSvm(SvmModel<F>),
    RandomForest(ForestModel<F>),
}

impl<F: Scalar> ClassifierModel<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            ClassifierModel::Knn(_) => "knn",
            ClassifierModel::LinearSvm(_) => "linear_svm",
            ClassifierModel::RandomForest(_) => "random_forest",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ClassifierModel::Knn(m) => m.dim(),
            ClassifierModel::LinearSvm(m) => m.dim(),
            ClassifierModel::RandomForest(m) => m.dim(),
        }
    }

    pub fn predict_row(&self, x: &[F]) -> Label {
        match self {
            ClassifierModel::Knn(m) => m.predict_row(x),
            ClassifierModel::LinearSvm(m) => m.predict_row(x),
            ClassifierModel::RandomForest(m) => m.predict_row(x),
        }
    }
}

/// One label per row of `features`.
pub fn predict<F: Scalar>(model: &ClassifierModel<F>, features: &FeatureMatrix<F>) -> Result<Vec<Label>> {
    use rayon::prelude::*;
    if features.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: features.dim(),
        });
    }
    Ok((0..features.len())
        .into_par_iter()
        .map(|i| model.predict_row(features.row(i)))
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct ModelFile<F: Scalar> {
    format: String,
    version: u32,
    scalar: String,
    dim: usize,
    model: ClassifierModel<F>,
}

const MODEL_FORMAT: &str = "mddphen-classifier";

/// JSON model file: a header (`format`, `version`, `scalar`, `dim`) and the
/// model tagged by `kind` with its config, seed and parameters.
pub fn write_classifier<F: Scalar>(model: &ClassifierModel<F>, path: &Path) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: 1,
        scalar: F::NAME.into(),
        dim: model.dim(),
        model: model.clone(),
    };
    let json = serde_json::to_string(&file).map_err(|e| Error::invalid(e.to_string()))?;
    jsonl::write_string(path, &(json + "\n"))
}

pub fn read_classifier<F: Scalar>(path: &Path) -> Result<ClassifierModel<F>> {
    let text = jsonl::read_string(path)?;
    let file: ModelFile<F> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.format != MODEL_FORMAT {
        return Err(Error::invalid(format!("{}: not a classifier model file", path.display())));
    }
    if file.scalar != F::NAME {
        return Err(Error::invalid(format!(
            "{}: model stores {} values, expected {}",
            path.display(),
            file.scalar,
            F::NAME
        )));
    }
    if file.dim != file.model.dim() {
        return Err(Error::DimensionMismatch {
            expected: file.dim,
            actual: file.model.dim(),
        });
    }
    Ok(file.model)
}
