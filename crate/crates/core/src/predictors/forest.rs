//! CART trees and bagged random forests.
//!
//! Binary {0, 1} targets are split on Gini impurity and leaves hold the
//! fraction of positive rows, so forest output is a probability. Any other
//! target is split on variance and leaves hold the mean. The weighted impurity
//! decrease of every split is accumulated per feature for
//! [`impurity_importance`](crate::comparison::impurity_importance).

use std::collections::BTreeMap;

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::predictors::{HandleKind, Model, OutputKind, PredictorHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Gini,
    Variance,
}

impl Criterion {
    fn impurity(&self, n: f64, sum: f64, sum_sq: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        let mean = sum / n;
        match self {
            Criterion::Gini => 2.0 * mean * (1.0 - mean),
            Criterion::Variance => (sum_sq / n - mean * mean).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
    pub bootstrap: bool,
    /// Features tried per split; `None` means `floor(sqrt(p))`, at least 1.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 2,
            seed: 0,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_one(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    criterion: Criterion,
    n_features: usize,
    /// Total weighted impurity decrease per feature, summed over trees.
    impurity_decrease: Vec<f64>,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn impurity_decrease(&self) -> &[f64] {
        &self.impurity_decrease
    }

    pub fn predict_one(&self, x: ArrayView1<'_, f64>) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.predict_one(x)).sum();
        total / self.trees.len() as f64
    }

    pub(crate) fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        rows.outer_iter().map(|r| self.predict_one(r)).collect()
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    criterion: Criterion,
    max_depth: usize,
    min_leaf: usize,
    max_features: usize,
    nodes: Vec<Node>,
    decrease: Vec<f64>,
    n_root: f64,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    child_cost: f64,
    split_at: usize,
    order: Vec<usize>,
}

impl Builder<'_> {
    fn stats(&self, idx: &[usize]) -> (f64, f64, f64) {
        idx.iter().fold((0.0, 0.0, 0.0), |(n, s, ss), &i| {
            let v = self.y[i];
            (n + 1.0, s + v, ss + v * v)
        })
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let (n, sum, sum_sq) = self.stats(&idx);
        let impurity = self.criterion.impurity(n, sum, sum_sq);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: sum / n });

        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf || impurity <= 0.0 {
            return at;
        }
        let Some(best) = self.best_split(&idx, rng) else {
            return at;
        };
        let gain = n * impurity - best.child_cost;
        if gain <= 0.0 {
            return at;
        }
        self.decrease[best.feature] += gain / self.n_root;

        let (left_idx, right_idx) = best.order.split_at(best.split_at);
        let (left_idx, right_idx) = (left_idx.to_vec(), right_idx.to_vec());
        let left = self.build(left_idx, depth + 1, rng);
        let right = self.build(right_idx, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }

    /// Tries `max_features` randomly chosen features; if none of them admits
    /// a split, keeps drawing from the remaining features.
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let p = self.x.ncols();
        let mut features: Vec<usize> = (0..p).collect();
        features.shuffle(rng);

        let mut best: Option<BestSplit> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            if let Some(candidate) = self.best_split_on(idx, f) {
                if best
                    .as_ref()
                    .is_none_or(|b| candidate.child_cost < b.child_cost)
                {
                    best = Some(candidate);
                }
            }
        }
        best
    }

    fn best_split_on(&self, idx: &[usize], feature: usize) -> Option<BestSplit> {
        let col = self.x.column(feature);
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));

        let (n, total, total_sq) = self.stats(&order);
        let mut left_n = 0.0;
        let mut left_s = 0.0;
        let mut left_ss = 0.0;
        let mut best: Option<(f64, usize)> = None;
        for k in 1..order.len() {
            let v = self.y[order[k - 1]];
            left_n += 1.0;
            left_s += v;
            left_ss += v * v;
            if k < self.min_leaf || order.len() - k < self.min_leaf {
                continue;
            }
            if col[order[k - 1]] == col[order[k]] {
                continue;
            }
            let right_n = n - left_n;
            let cost = left_n * self.criterion.impurity(left_n, left_s, left_ss)
                + right_n
                    * self
                        .criterion
                        .impurity(right_n, total - left_s, total_sq - left_ss);
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, k));
            }
        }
        let (child_cost, split_at) = best?;
        let lo = col[order[split_at - 1]];
        let hi = col[order[split_at]];
        let mut threshold = lo + (hi - lo) / 2.0;
        if threshold >= hi {
            threshold = lo;
        }
        Some(BestSplit {
            feature,
            threshold,
            child_cost,
            split_at,
            order,
        })
    }
}

fn grow_tree(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    criterion: Criterion,
    config: &ForestConfig,
    max_features: usize,
    tree_index: usize,
) -> (Tree, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(tree_index as u64);
    let n = x.nrows();
    let idx: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut b = Builder {
        x,
        y,
        criterion,
        max_depth: config.max_depth,
        min_leaf: config.min_leaf.max(1),
        max_features,
        nodes: Vec::new(),
        decrease: vec![0.0; x.ncols()],
        n_root: idx.len() as f64,
    };
    b.build(idx, 0, &mut rng);
    (Tree { nodes: b.nodes }, b.decrease)
}

fn fit(dataset: &Dataset, config: ForestConfig, kind: HandleKind) -> Result<PredictorHandle> {
    let target = dataset.target().ok_or(Error::NoTarget)?;
    if config.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let x = dataset.rows().view();
    let p = x.ncols();
    let criterion = if target.is_binary() {
        Criterion::Gini
    } else {
        Criterion::Variance
    };
    let max_features = config
        .max_features
        .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
        .clamp(1, p);

    let grown: Vec<(Tree, Vec<f64>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(x, &target.values, criterion, &config, max_features, t))
        .collect();

    let mut impurity_decrease = vec![0.0; p];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, dec) in grown {
        for (acc, d) in impurity_decrease.iter_mut().zip(&dec) {
            *acc += d;
        }
        trees.push(tree);
    }

    let forest = Forest {
        trees,
        criterion,
        n_features: p,
        impurity_decrease,
    };
    let output_kind = match criterion {
        Criterion::Gini => OutputKind::Probability,
        Criterion::Variance => OutputKind::RegressionScore,
    };
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "model".into(),
        match kind {
            HandleKind::BuiltinTree => "tree",
            _ => "forest",
        }
        .into(),
    );
    metadata.insert("n_trees".into(), config.n_trees.to_string());
    metadata.insert("max_depth".into(), config.max_depth.to_string());
    metadata.insert("min_leaf".into(), config.min_leaf.to_string());
    metadata.insert("max_features".into(), max_features.to_string());
    metadata.insert("bootstrap".into(), config.bootstrap.to_string());
    metadata.insert("seed".into(), config.seed.to_string());
    metadata.insert(
        "criterion".into(),
        match criterion {
            Criterion::Gini => "gini",
            Criterion::Variance => "variance",
        }
        .into(),
    );
    Ok(PredictorHandle::new(
        kind,
        output_kind,
        metadata,
        Model::Forest(forest),
    ))
}

/// Bagged CART forest with `sqrt(p)` features tried per split by default.
pub fn fit_forest(dataset: &Dataset, config: ForestConfig) -> Result<PredictorHandle> {
    fit(dataset, config, HandleKind::BuiltinForest)
}

/// One CART tree on the full dataset, every feature considered at each split.
pub fn fit_tree(
    dataset: &Dataset,
    max_depth: usize,
    min_leaf: usize,
    seed: u64,
) -> Result<PredictorHandle> {
    let config = ForestConfig {
        n_trees: 1,
        max_depth,
        min_leaf,
        seed,
        bootstrap: false,
        max_features: Some(dataset.n_features()),
    };
    fit(dataset, config, HandleKind::BuiltinTree)
}
