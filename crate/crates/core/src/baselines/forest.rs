use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{majority, FeatureMatrix};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::scalar::Scalar;
use crate::seed::stream_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `floor(sqrt(dim))`.
    pub max_features: Option<usize>,
    /// Nodes with fewer rows become leaves.
    pub min_samples_split: usize,
    /// Every child of a split keeps at least this many rows.
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if self.max_features == Some(0) {
            return Err(Error::invalid("max_features must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }

    pub fn features_per_split(&self, dim: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| ((dim as f64).sqrt().floor() as usize).max(1))
            .min(dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(rename_all = "snake_case")]
pub enum TreeNode<F: Scalar> {
    Leaf {
        label: Label,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
}

/// CART tree stored as a node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DecisionTree<F: Scalar> {
    nodes: Vec<TreeNode<F>>,
}

impl<F: Scalar> DecisionTree<F> {
    pub fn nodes(&self) -> &[TreeNode<F>] {
        &self.nodes
    }

    pub fn root_feature(&self) -> Option<usize> {
        match self.nodes[0] {
            TreeNode::Split { feature, .. } => Some(feature),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn predict_row(&self, x: &[F]) -> Label {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { label } => return label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Majority vote over bootstrapped Gini trees; tied votes go to class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ForestModel<F: Scalar> {
    dim: usize,
    config: ForestConfig,
    trees: Vec<DecisionTree<F>>,
}

impl<F: Scalar> ForestModel<F> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[DecisionTree<F>] {
        &self.trees
    }

    pub fn votes(&self, x: &[F]) -> [usize; Label::COUNT] {
        let mut v = [0; Label::COUNT];
        for t in &self.trees {
            v[t.predict_row(x).index()] += 1;
        }
        v
    }

    pub fn predict_row(&self, x: &[F]) -> Label {
        majority(&self.votes(x))
    }
}

pub fn train_random_forest<F: Scalar>(features: &FeatureMatrix<F>, config: &ForestConfig) -> Result<ForestModel<F>> {
    config.validate()?;
    if features.is_empty() {
        return Err(Error::invalid("cannot train on an empty feature matrix"));
    }
    let data = features.canonical();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, t as u64));
            let n = data.len();
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(&data, rows, config, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        dim: data.dim(),
        config: config.clone(),
        trees,
    })
}

fn counts_of<F: Scalar>(data: &FeatureMatrix<F>, rows: &[usize]) -> [usize; Label::COUNT] {
    let mut c = [0; Label::COUNT];
    for &r in rows {
        c[data.labels()[r].index()] += 1;
    }
    c
}

fn weighted_gini(counts: &[usize; Label::COUNT], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    n - sq / n
}

struct Split<F> {
    feature: usize,
    threshold: F,
    impurity: f64,
}

/// Best Gini split of `rows` on `feature`, if any threshold separates values
/// while leaving `min_leaf` rows on each side.
fn best_split_on<F: Scalar>(
    data: &FeatureMatrix<F>,
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
    buf: &mut Vec<(F, Label)>,
) -> Option<Split<F>> {
    buf.clear();
    buf.extend(rows.iter().map(|&r| (data.row(r)[feature], data.labels()[r])));
    buf.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let n = buf.len();
    let mut right = [0usize; Label::COUNT];
    for (_, l) in buf.iter() {
        right[l.index()] += 1;
    }
    let mut left = [0usize; Label::COUNT];
    let mut best: Option<Split<F>> = None;
    for i in 0..n - 1 {
        let c = buf[i].1.index();
        left[c] += 1;
        right[c] -= 1;
        let (a, b) = (buf[i].0, buf[i + 1].0);
        let nl = i + 1;
        if a == b || nl < min_leaf || n - nl < min_leaf {
            continue;
        }
        let impurity = weighted_gini(&left, nl) + weighted_gini(&right, n - nl);
        if best.as_ref().is_none_or(|s| impurity < s.impurity) {
            let two = F::one() + F::one();
            let mut threshold = a / two + b / two;
            if threshold >= b || threshold < a {
                threshold = a;
            }
            best = Some(Split {
                feature,
                threshold,
                impurity,
            });
        }
    }
    best
}

fn grow_tree<F: Scalar>(
    data: &FeatureMatrix<F>,
    mut rows: Vec<usize>,
    config: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> DecisionTree<F> {
    let dim = data.dim();
    let mtry = config.features_per_split(dim);
    let mut nodes: Vec<TreeNode<F>> = vec![TreeNode::Leaf { label: Label::Unknown }];
    // (node index, row range, depth)
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
    let mut order: Vec<usize> = (0..dim).collect();
    let mut buf = Vec::with_capacity(rows.len());
    while let Some((node, lo, hi, depth)) = stack.pop() {
        let slice = &rows[lo..hi];
        let counts = counts_of(data, slice);
        let label = majority(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = config.max_depth.is_some_and(|d| depth >= d);
        if pure || slice.len() < config.min_samples_split || depth_capped {
            nodes[node] = TreeNode::Leaf { label };
            continue;
        }
        // Features are tried in a random order; the first `mtry` are the
        // candidates, and further ones are drawn only while none of those
        // admits a split.
        order.shuffle(rng);
        let mut best: Option<Split<F>> = None;
        for (k, &f) in order.iter().enumerate() {
            if k >= mtry && best.is_some() {
                break;
            }
            if let Some(s) = best_split_on(data, slice, f, config.min_samples_leaf, &mut buf) {
                if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            nodes[node] = TreeNode::Leaf { label };
            continue;
        };
        let slice = &mut rows[lo..hi];
        let mut mid = 0;
        for i in 0..slice.len() {
            if data.row(slice[i])[split.feature] <= split.threshold {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode::Leaf { label });
        nodes.push(TreeNode::Leaf { label });
        nodes[node] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, lo + mid, hi, depth + 1));
        stack.push((left, lo, lo + mid, depth + 1));
    }
    DecisionTree { nodes }
}
