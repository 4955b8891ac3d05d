//! Stagewise gradient boosting under squared loss with greedy CART
//! regression trees fitted to residuals.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `max_depth` value meaning "grow until leaves are pure or too small".
pub const UNLIMITED_DEPTH: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmConfig {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 2,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 {
            return Err(Error::Config("gbm.n_stages must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "gbm.learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config(
                "gbm.min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary regression tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeArrays", try_from = "TreeArrays")]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
}

/// Column layout used for serialization. Leaves have `feature == -1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TreeArrays {
    max_depth: usize,
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<usize>,
    right: Vec<usize>,
    value: Vec<f64>,
}

impl From<RegressionTree> for TreeArrays {
    fn from(t: RegressionTree) -> Self {
        let mut a = TreeArrays {
            max_depth: t.max_depth,
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
        };
        for node in t.nodes {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    a.feature.push(feature as i64);
                    a.threshold.push(threshold);
                    a.left.push(left);
                    a.right.push(right);
                    a.value.push(0.0);
                }
                TreeNode::Leaf { value } => {
                    a.feature.push(-1);
                    a.threshold.push(0.0);
                    a.left.push(0);
                    a.right.push(0);
                    a.value.push(value);
                }
            }
        }
        a
    }
}

impl TryFrom<TreeArrays> for RegressionTree {
    type Error = String;

    fn try_from(a: TreeArrays) -> std::result::Result<Self, String> {
        let n = a.feature.len();
        if [
            a.threshold.len(),
            a.left.len(),
            a.right.len(),
            a.value.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err("tree arrays have different lengths".into());
        }
        let nodes = (0..n)
            .map(|i| {
                if a.feature[i] < 0 {
                    Ok(TreeNode::Leaf { value: a.value[i] })
                } else if a.left[i] <= i || a.right[i] <= i || a.left[i] >= n || a.right[i] >= n {
                    Err(format!("node {i} has invalid children"))
                } else {
                    Ok(TreeNode::Split {
                        feature: a.feature[i] as usize,
                        threshold: a.threshold[i],
                        left: a.left[i],
                        right: a.right[i],
                    })
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(RegressionTree {
            nodes,
            max_depth: a.max_depth,
        })
    }
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![TreeNode::Leaf { value }],
            max_depth: 0,
        }
    }

    /// Index of the leaf a row lands in.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    /// Length of the longest root-to-leaf path (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Summed squared error of the two children around their own means.
    pub score: f64,
}

/// Exhaustive greedy search over every feature and every midpoint between
/// consecutive distinct sorted values, subject to `min_samples_leaf` rows per
/// side. Ties go to the lowest feature index, then the lowest threshold.
pub fn best_split(
    x: &Tensor,
    residuals: &[f64],
    rows: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    let min_leaf = min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    // Centering first keeps the prefix-sum SSE free of large cancellations.
    let mean = rows.iter().map(|&r| residuals[r]).sum::<f64>() / n as f64;
    // Different features can induce the same partition; their scores agree
    // only up to rounding, so near-equal scores count as ties.
    let tie_eps = 1e-12
        * (1.0
            + rows
                .iter()
                .map(|&r| (residuals[r] - mean).powi(2))
                .sum::<f64>());
    let mut best: Option<SplitChoice> = None;
    let mut order = rows.to_vec();
    for feature in 0..x.cols() {
        order.sort_by(|&a, &b| x.get2(a, feature).total_cmp(&x.get2(b, feature)));
        let total: f64 = order.iter().map(|&r| residuals[r] - mean).sum();
        let total_sq: f64 = order.iter().map(|&r| (residuals[r] - mean).powi(2)).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 1..n {
            let v = residuals[order[k - 1]] - mean;
            s += v;
            sq += v * v;
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (lo, hi) = (x.get2(order[k - 1], feature), x.get2(order[k], feature));
            if lo == hi {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let sse_left = sq - s * s / nl;
            let sse_right = (total_sq - sq) - (total - s) * (total - s) / nr;
            let score = sse_left + sse_right;
            if best.is_none_or(|b| score < b.score - tie_eps) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}

/// Fits a CART regression tree to `residuals` under squared error. Leaves
/// hold the mean residual of their rows.
pub fn fit_tree(
    x: &Tensor,
    residuals: &[f64],
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<RegressionTree> {
    if x.rank() != 2 || x.rows() != residuals.len() || residuals.is_empty() {
        return Err(Error::dim("fit_tree", x.shape(), &[residuals.len()]));
    }
    let mut tree = RegressionTree {
        nodes: Vec::new(),
        max_depth,
    };
    let rows: Vec<usize> = (0..residuals.len()).collect();
    grow(
        &mut tree,
        x,
        residuals,
        rows,
        0,
        max_depth,
        min_samples_leaf,
    );
    Ok(tree)
}

fn grow(
    tree: &mut RegressionTree,
    x: &Tensor,
    residuals: &[f64],
    rows: Vec<usize>,
    depth: usize,
    max_depth: usize,
    min_samples_leaf: usize,
) -> usize {
    let id = tree.nodes.len();
    let first = residuals[rows[0]];
    if rows.iter().all(|&r| residuals[r] == first) {
        tree.nodes.push(TreeNode::Leaf { value: first });
        return id;
    }
    let mean = rows.iter().map(|&r| residuals[r]).sum::<f64>() / rows.len() as f64;
    let parent_sse: f64 = rows.iter().map(|&r| (residuals[r] - mean).powi(2)).sum();
    let split = if depth < max_depth {
        best_split(x, residuals, &rows, min_samples_leaf).filter(|s| s.score < parent_sse)
    } else {
        None
    };
    let Some(split) = split else {
        tree.nodes.push(TreeNode::Leaf { value: mean });
        return id;
    };
    tree.nodes.push(TreeNode::Leaf { value: mean });
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| x.get2(r, split.feature) <= split.threshold);
    let left = grow(
        tree,
        x,
        residuals,
        left_rows,
        depth + 1,
        max_depth,
        min_samples_leaf,
    );
    let right = grow(
        tree,
        x,
        residuals,
        right_rows,
        depth + 1,
        max_depth,
        min_samples_leaf,
    );
    tree.nodes[id] = TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub initial_prediction: f64,
    pub trees: Vec<RegressionTree>,
    pub config: GbmConfig,
    /// Training MSE after 0, 1, ..., M stages (length M + 1).
    pub stage_mse_curve: Vec<f64>,
    pub n_features: usize,
}

fn mse(y: &[f64], pred: &[f64]) -> f64 {
    y.iter()
        .zip(pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64
}

/// L2 boosting on {0, 1} labels: start from the label mean and add
/// `learning_rate * tree` for each stage, each tree fitted to the current
/// residuals.
pub fn gbm_fit(train: &Dataset, config: &GbmConfig) -> Result<GbmModel> {
    config.validate()?;
    let n = train.n_rows();
    if n < 2 {
        return Err(Error::Usage(format!(
            "gbm_fit needs at least 2 rows, got {n}"
        )));
    }
    let y = train.labels_f64();
    let f0 = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![f0; n];
    let mut curve = vec![mse(&y, &pred)];
    let mut trees = Vec::with_capacity(config.n_stages);
    for _ in 0..config.n_stages {
        let residuals: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let tree = fit_tree(
            &train.x,
            &residuals,
            config.max_depth,
            config.min_samples_leaf,
        )?;
        for (r, p) in pred.iter_mut().enumerate() {
            *p += config.learning_rate * tree.predict_row(train.x.row(r));
        }
        curve.push(mse(&y, &pred));
        trees.push(tree);
    }
    Ok(GbmModel {
        initial_prediction: f0,
        trees,
        config: *config,
        stage_mse_curve: curve,
        n_features: train.n_features(),
    })
}

/// Unclamped additive score, accumulated stage by stage in training order.
pub fn gbm_predict_raw(model: &GbmModel, x: &Tensor) -> Result<Vec<f64>> {
    if x.rank() != 2 || x.cols() != model.n_features {
        return Err(Error::dim("gbm_predict", x.shape(), &[model.n_features]));
    }
    Ok((0..x.rows())
        .map(|r| {
            let row = x.row(r);
            model.trees.iter().fold(model.initial_prediction, |acc, t| {
                acc + model.config.learning_rate * t.predict_row(row)
            })
        })
        .collect())
}

/// Raw scores clamped to `[0, 1]`.
pub fn gbm_predict_proba(model: &GbmModel, x: &Tensor) -> Result<Vec<f64>> {
    Ok(gbm_predict_raw(model, x)?
        .into_iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect())
}
