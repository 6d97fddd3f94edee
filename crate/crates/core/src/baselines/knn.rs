use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::scalar::{squared_distance, Scalar};

/// Stored training rows plus `k`. Prediction takes a uniform vote among the
/// `k` rows nearest in Euclidean distance (equal distances resolved by row
/// position in sentence-id order). A tied vote goes to the class whose
/// voters have the smallest summed distance, then to class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KnnModel<F: Scalar> {
    k: usize,
    train: FeatureMatrix<F>,
}

pub fn train_knn<F: Scalar>(features: &FeatureMatrix<F>, k: usize) -> Result<KnnModel<F>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if features.len() < k {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} training rows",
            features.len()
        )));
    }
    Ok(KnnModel {
        k,
        train: features.canonical(),
    })
}

impl<F: Scalar> KnnModel<F> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    pub fn training_rows(&self) -> &FeatureMatrix<F> {
        &self.train
    }

    /// Indices (into [`Self::training_rows`]) and distances of the `k`
    /// nearest rows, nearest first.
    pub fn neighbours(&self, x: &[F]) -> Vec<(usize, F)> {
        let mut d: Vec<(F, usize)> = (0..self.train.len())
            .map(|i| (squared_distance(self.train.row(i), x), i))
            .collect();
        let cmp = |a: &(F, usize), b: &(F, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(sq, i)| (i, sq.sqrt())).collect()
    }

    pub fn predict_row(&self, x: &[F]) -> Label {
        let mut votes = [0usize; Label::COUNT];
        let mut dist = [0f64; Label::COUNT];
        for (i, d) in self.neighbours(x) {
            let c = self.train.labels()[i].index();
            votes[c] += 1;
            dist[c] += d.to_f64_lossy();
        }
        let mut best = 0;
        for c in 1..Label::COUNT {
            if votes[c] > votes[best] || (votes[c] == votes[best] && votes[c] > 0 && dist[c] < dist[best]) {
                best = c;
            }
        }
        Label::ALL[best]
    }
}
