use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::scalar::{dot, Scalar};
use crate::seed::stream_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Hinge-loss weight `C`.
    pub c: f64,
    /// Stop once the projected-gradient spread of an epoch falls below this.
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            tolerance: 1e-3,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid("C must be positive"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        Ok(())
    }
}

/// One binary linear scorer per class, trained one-vs-rest on
/// `0.5 * (|w|^2 + b^2) + C * sum(max(0, 1 - y (w.x + b)))`.
/// A class absent from training has no scorer and is never predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SvmModel<F: Scalar> {
    dim: usize,
    config: SvmConfig,
    weights: Vec<Option<Vec<F>>>,
    biases: Vec<F>,
    epochs: Vec<usize>,
}

/// Dual coordinate descent on the hinge-loss SVM with the bias folded in as a
/// constant feature. Runs in `f64`; returns `(w, b, epochs used)`.
fn solve_binary(x: &[Vec<f64>], y: &[f64], config: &SvmConfig, seed: u64) -> (Vec<f64>, f64, usize) {
    let n = x.len();
    let dim = x.first().map_or(0, Vec::len);
    let c = config.c;
    let qd: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut epochs = 0;
    while epochs < config.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let xi = &x[i];
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-14 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let d = (alpha[i] - old) * y[i];
                for (wj, &xj) in w.iter_mut().zip(xi) {
                    *wj += d * xj;
                }
                b += d;
            }
        }
        if pg_max - pg_min < config.tolerance {
            break;
        }
    }
    (w, b, epochs)
}

pub fn train_linear_svm<F: Scalar>(features: &FeatureMatrix<F>, config: &SvmConfig) -> Result<SvmModel<F>> {
    config.validate()?;
    if features.is_empty() {
        return Err(Error::invalid("cannot train on an empty feature matrix"));
    }
    let data = features.canonical();
    let counts = data.class_counts();
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::invalid("training data must contain at least two classes"));
    }
    let x: Vec<Vec<f64>> = (0..data.len())
        .map(|i| data.row(i).iter().map(|v| v.to_f64_lossy()).collect())
        .collect();
    let solved: Vec<Option<(Vec<f64>, f64, usize)>> = Label::ALL
        .par_iter()
        .map(|&class| {
            if counts[class.index()] == 0 {
                return None;
            }
            let y: Vec<f64> = data
                .labels()
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            Some(solve_binary(&x, &y, config, stream_seed(config.seed, class.index() as u64)))
        })
        .collect();
    let mut weights = Vec::with_capacity(Label::COUNT);
    let mut biases = Vec::with_capacity(Label::COUNT);
    let mut epochs = Vec::with_capacity(Label::COUNT);
    for s in solved {
        match s {
            Some((w, b, e)) => {
                weights.push(Some(w.into_iter().map(F::from_f64_lossy).collect()));
                biases.push(F::from_f64_lossy(b));
                epochs.push(e);
            }
            None => {
                weights.push(None);
                biases.push(F::zero());
                epochs.push(0);
            }
        }
    }
    Ok(SvmModel {
        dim: data.dim(),
        config: config.clone(),
        weights,
        biases,
        epochs,
    })
}

impl<F: Scalar> SvmModel<F> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &SvmConfig {
        &self.config
    }

    pub fn weights(&self, class: Label) -> Option<&[F]> {
        self.weights[class.index()].as_deref()
    }

    pub fn bias(&self, class: Label) -> F {
        self.biases[class.index()]
    }

    /// Coordinate-descent epochs used per class.
    pub fn epochs(&self) -> &[usize] {
        &self.epochs
    }

    /// Decision value per class; `None` for classes without a scorer.
    pub fn scores(&self, x: &[F]) -> [Option<F>; Label::COUNT] {
        let mut out = [None; Label::COUNT];
        for (c, w) in self.weights.iter().enumerate() {
            if let Some(w) = w {
                out[c] = Some(dot(w, x) + self.biases[c]);
            }
        }
        out
    }

    /// Highest-scoring class, first in class order on ties.
    pub fn predict_row(&self, x: &[F]) -> Label {
        let mut best: Option<(usize, F)> = None;
        for (c, s) in self.scores(x).into_iter().enumerate() {
            if let Some(s) = s {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((c, s));
                }
            }
        }
        Label::ALL[best.map_or(0, |(c, _)| c)]
    }

    /// Primal objective of the binary problem for `class` on `features`.
    pub fn objective(&self, features: &FeatureMatrix<F>, class: Label) -> Option<f64> {
        let w = self.weights(class)?;
        let b = self.bias(class).to_f64_lossy();
        Some(svm_objective(
            &w.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            b,
            features,
            class,
            self.config.c,
        ))
    }
}

/// `0.5 * (|w|^2 + b^2) + C * sum hinge` for the one-vs-rest problem of `class`.
pub(crate) fn svm_objective<F: Scalar>(w: &[f64], b: f64, features: &FeatureMatrix<F>, class: Label, c: f64) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let hinge: f64 = (0..features.len())
        .map(|i| {
            let y = if features.labels()[i] == class { 1.0 } else { -1.0 };
            let s: f64 = features.row(i).iter().zip(w).map(|(x, w)| x.to_f64_lossy() * w).sum::<f64>() + b;
            (1.0 - y * s).max(0.0)
        })
        .sum();
    reg + c * hinge
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_linear_classes() {
        use Label::*;
        let rows = vec![
            vec![2.0, 0.0],
            vec![3.0, 0.5],
            vec![-2.0, 0.0],
            vec![-3.0, -0.5],
            vec![0.0, 3.0],
            vec![0.5, 4.0],
        ];
        let m = FeatureMatrix::<f64>::from_rows(&rows, vec![Positive, Positive, Negated, Negated, Possible, Possible]).unwrap();
        let model = train_linear_svm(&m, &SvmConfig::default()).unwrap();
        assert!(model.weights(Unknown).is_none());
        for i in 0..m.len() {
            assert_eq!(model.predict_row(m.row(i)), m.labels()[i]);
        }
    }

    #[test]
    fn zero_weights_objective_is_c_times_n() {
        let m = FeatureMatrix::<f64>::from_rows(&[vec![1.0], vec![-1.0], vec![0.5]], vec![Label::Unknown, Label::Positive, Label::Unknown]).unwrap();
        let obj = svm_objective(&[0.0], 0.0, &m, Label::Unknown, 2.5);
        assert!((obj - 2.5 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn optimum_beats_zero() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0, (i % 3) as f64]).collect();
        let labels = (0..20).map(|i| if i < 10 { Label::Unknown } else { Label::Negated }).collect();
        let m = FeatureMatrix::from_rows(&rows, labels).unwrap();
        let model = train_linear_svm(&m, &SvmConfig::default()).unwrap();
        let obj = model.objective(&m, Label::Negated).unwrap();
        assert!(obj < svm_objective(&[0.0, 0.0], 0.0, &m, Label::Negated, 1.0));
    }

    #[test]
    fn requires_two_classes() {
        let m = FeatureMatrix::<f64>::from_rows(&[vec![1.0]], vec![Label::Unknown]).unwrap();
        assert!(train_linear_svm(&m, &SvmConfig::default()).is_err());
        let bad = SvmConfig { c: 0.0, ..SvmConfig::default() };
        assert!(bad.validate().is_err());
    }
}
