//! Self-contained classifiers for the utility benchmark and the attack
//! model: logistic regression, Gaussian naive Bayes, decision tree, random
//! forest, and an MLP backed by [`crate::nn`].
//!
//! All trainers are deterministic given their seed. Single-class training
//! data yields a flagged constant-score model instead of an error, because
//! heavily imbalanced synthetic data makes that case routine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_linear, Matrix};
use crate::nn::{bce_loss, HiddenActivation, Mlp, OptimizerKind, OptimizerState, OutputActivation};
use crate::rng::rng_from;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logreg,
    GaussianNb,
    DecisionTree,
    RandomForest,
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Logreg,
        ClassifierKind::GaussianNb,
        ClassifierKind::DecisionTree,
        ClassifierKind::RandomForest,
        ClassifierKind::Mlp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Logreg => "logreg",
            ClassifierKind::GaussianNb => "gaussian_nb",
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::Mlp => "mlp",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown classifier {name:?}; valid: {valid:?}"))
            })
    }
}

/// Training knobs; the defaults are what the benchmark uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub tree_max_depth: usize,
    pub forest_trees: usize,
    pub mlp_hidden: usize,
    pub mlp_steps: usize,
    pub mlp_learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            tree_max_depth: 8,
            forest_trees: 100,
            mlp_hidden: 32,
            mlp_steps: 300,
            mlp_learning_rate: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn score(&self, row: &[f64]) -> f64 {
        let z: f64 = self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        1.0 / (1.0 + (-z).exp())
    }
}

/// Full-batch logistic regression via iteratively reweighted least squares,
/// run to a 1e-8 step tolerance or 100 iterations. A tiny ridge keeps the
/// normal equations solvable on separable data.
pub fn fit_logreg(x: &[Vec<f64>], y: &[f64]) -> Result<LogisticModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Shape("bad logreg input".into()));
    }
    let d = x[0].len();
    let n = x.len();
    let dim = d + 1; // bias folded in as the last coordinate
    let mut beta = vec![0.0; dim];
    const RIDGE: f64 = 1e-9;
    for _ in 0..100 {
        // gradient and Hessian of the regularized log-likelihood
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for i in 0..n {
            let mut z = beta[d];
            for j in 0..d {
                z += beta[j] * x[i][j];
            }
            let p = 1.0 / (1.0 + (-z).exp());
            let w = (p * (1.0 - p)).max(1e-12);
            let resid = p - y[i];
            for j in 0..dim {
                let xj = if j == d { 1.0 } else { x[i][j] };
                grad[j] += resid * xj;
                for k in 0..dim {
                    let xk = if k == d { 1.0 } else { x[i][k] };
                    hess[j * dim + k] += w * xj * xk;
                }
            }
        }
        for j in 0..dim {
            grad[j] += RIDGE * beta[j];
            hess[j * dim + j] += RIDGE;
        }
        let step = solve_linear(&mut hess, &mut grad, dim)?;
        let mut max_step = 0.0f64;
        for j in 0..dim {
            beta[j] -= step[j];
            max_step = max_step.max(step[j].abs());
        }
        if max_step < 1e-8 {
            break;
        }
    }
    Ok(LogisticModel {
        weights: beta[..d].to_vec(),
        bias: beta[d],
    })
}

#[derive(Debug, Clone)]
struct GaussianNb {
    prior_pos: f64,
    mean_pos: Vec<f64>,
    var_pos: Vec<f64>,
    mean_neg: Vec<f64>,
    var_neg: Vec<f64>,
}

impl GaussianNb {
    fn fit(x: &[Vec<f64>], y: &[f64]) -> Self {
        let d = x[0].len();
        let stats = |label_pos: bool| -> (Vec<f64>, Vec<f64>, usize) {
            let rows: Vec<&Vec<f64>> = x
                .iter()
                .zip(y)
                .filter(|(_, &yy)| (yy > 0.5) == label_pos)
                .map(|(r, _)| r)
                .collect();
            let count = rows.len();
            let mut mean = vec![0.0; d];
            let mut var = vec![0.0; d];
            for r in &rows {
                for (m, &v) in mean.iter_mut().zip(r.iter()) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            for r in &rows {
                for j in 0..d {
                    let diff = r[j] - mean[j];
                    var[j] += diff * diff;
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / count as f64).max(1e-9));
            (mean, var, count)
        };
        let (mean_pos, var_pos, n_pos) = stats(true);
        let (mean_neg, var_neg, _) = stats(false);
        GaussianNb {
            prior_pos: n_pos as f64 / x.len() as f64,
            mean_pos,
            var_pos,
            mean_neg,
            var_neg,
        }
    }

    fn score(&self, row: &[f64]) -> f64 {
        let log_lik = |mean: &[f64], var: &[f64]| -> f64 {
            row.iter()
                .zip(mean.iter().zip(var))
                .map(|(&v, (&m, &s2))| {
                    -0.5 * ((v - m) * (v - m) / s2 + s2.ln() + (2.0 * std::f64::consts::PI).ln())
                })
                .sum()
        };
        let lp = self.prior_pos.max(1e-12).ln() + log_lik(&self.mean_pos, &self.var_pos);
        let ln_ = (1.0 - self.prior_pos).max(1e-12).ln() + log_lik(&self.mean_neg, &self.var_neg);
        // posterior via the log-sum trick
        let m = lp.max(ln_);
        let num = (lp - m).exp();
        num / (num + (ln_ - m).exp())
    }
}

#[derive(Debug, Clone)]
enum TreeNode {
    Leaf {
        positive_fraction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn score(&self, row: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { positive_fraction } => *positive_fraction,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.score(row)
                } else {
                    right.score(row)
                }
            }
        }
    }
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

/// CART with gini impurity. `feature_pool` restricts the features considered
/// at each split (the forest passes a random subset per node).
fn build_tree(
    x: &[Vec<f64>],
    y: &[f64],
    indices: &[usize],
    depth: usize,
    max_depth: usize,
    features_per_split: Option<usize>,
    rng: &mut impl Rng,
) -> TreeNode {
    let pos = indices.iter().filter(|&&i| y[i] > 0.5).count();
    let total = indices.len();
    let leaf = TreeNode::Leaf {
        positive_fraction: pos as f64 / total as f64,
    };
    if depth >= max_depth || pos == 0 || pos == total || total < 2 {
        return leaf;
    }
    let d = x[0].len();
    let pool: Vec<usize> = match features_per_split {
        None => (0..d).collect(),
        Some(k) => {
            let mut all: Vec<usize> = (0..d).collect();
            // partial Fisher-Yates for the first k
            for i in 0..k.min(d) {
                let j = rng.gen_range(i..d);
                all.swap(i, j);
            }
            all.truncate(k.min(d));
            all.sort_unstable();
            all
        }
    };
    let parent_impurity = gini(pos, total);
    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    for &f in &pool {
        let mut values: Vec<(f64, bool)> =
            indices.iter().map(|&i| (x[i][f], y[i] > 0.5)).collect();
        values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left_pos = 0usize;
        let mut left_total = 0usize;
        for w in 0..values.len() - 1 {
            left_total += 1;
            if values[w].1 {
                left_pos += 1;
            }
            if values[w].0 == values[w + 1].0 {
                continue;
            }
            let right_total = total - left_total;
            let right_pos = pos - left_pos;
            let weighted = (left_total as f64 * gini(left_pos, left_total)
                + right_total as f64 * gini(right_pos, right_total))
                / total as f64;
            let gain = parent_impurity - weighted;
            let threshold = (values[w].0 + values[w + 1].0) / 2.0;
            // zero-gain splits are allowed on impure nodes (xor-style data
            // needs two levels before any split pays off)
            let better = match best {
                None => gain >= -1e-12,
                Some((bg, bf, bt)) => {
                    gain > bg + 1e-12
                        || ((gain - bg).abs() <= 1e-12 && (f, threshold) < (bf, bt))
                }
            };
            if better {
                best = Some((gain, f, threshold));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return leaf;
    };
    let left_idx: Vec<usize> = indices.iter().copied().filter(|&i| x[i][feature] <= threshold).collect();
    let right_idx: Vec<usize> = indices.iter().copied().filter(|&i| x[i][feature] > threshold).collect();
    if left_idx.is_empty() || right_idx.is_empty() {
        return leaf;
    }
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(build_tree(x, y, &left_idx, depth + 1, max_depth, features_per_split, rng)),
        right: Box::new(build_tree(x, y, &right_idx, depth + 1, max_depth, features_per_split, rng)),
    }
}

/// A fitted model of any [`ClassifierKind`].
#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    pub feature_count: usize,
    /// Set when training data had a single class; the model scores constant.
    pub degenerate_constant: Option<f64>,
    model: ModelParams,
}

#[derive(Debug, Clone)]
enum ModelParams {
    Constant,
    Logreg(LogisticModel),
    GaussianNb(GaussianNb),
    Tree(TreeNode),
    Forest(Vec<TreeNode>),
    Mlp(Mlp),
}

/// Train a classifier. `x` is row-major features, `y` binary labels.
pub fn fit(
    kind: ClassifierKind,
    x: &[Vec<f64>],
    y: &[f64],
    config: &ClassifierConfig,
    seed: u64,
) -> Result<TrainedClassifier> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Shape("training data shape mismatch".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("NaN in training features".into()));
    }
    let d = x[0].len();
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    if pos == 0 || pos == y.len() {
        let c = if pos == 0 { 0.0 } else { 1.0 };
        return Ok(TrainedClassifier {
            kind,
            feature_count: d,
            degenerate_constant: Some(c),
            model: ModelParams::Constant,
        });
    }
    let model = match kind {
        ClassifierKind::Logreg => ModelParams::Logreg(fit_logreg(x, y)?),
        ClassifierKind::GaussianNb => ModelParams::GaussianNb(GaussianNb::fit(x, y)),
        ClassifierKind::DecisionTree => {
            let indices: Vec<usize> = (0..x.len()).collect();
            let mut rng = rng_from(seed, &[0x7ee]);
            ModelParams::Tree(build_tree(x, y, &indices, 0, config.tree_max_depth, None, &mut rng))
        }
        ClassifierKind::RandomForest => {
            let per_split = (d as f64).sqrt().round().max(1.0) as usize;
            let trees: Vec<TreeNode> = (0..config.forest_trees)
                .map(|t| {
                    let mut rng = rng_from(seed, &[0xf0_5e57, t as u64]);
                    let bootstrap: Vec<usize> =
                        (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
                    build_tree(x, y, &bootstrap, 0, config.tree_max_depth, Some(per_split), &mut rng)
                })
                .collect();
            ModelParams::Forest(trees)
        }
        ClassifierKind::Mlp => {
            let mut rng = rng_from(seed, &[0x313]);
            let mut net = Mlp::new(
                vec![d, config.mlp_hidden, 1],
                HiddenActivation::Relu,
                OutputActivation::Sigmoid,
                &mut rng,
            )?;
            let mut opt = OptimizerState::new(OptimizerKind::Adam, config.mlp_learning_rate, &net);
            let batch = Matrix::from_rows(x)?;
            for _ in 0..config.mlp_steps {
                let (out, cache) = net.forward(&batch)?;
                let (_, grad) = bce_loss(&out.data, y)?;
                let gm = Matrix::from_vec(out.rows, out.cols, grad)?;
                let (grads, _) = net.backward(&cache, &gm)?;
                opt.apply(&mut net, &grads)?;
            }
            ModelParams::Mlp(net)
        }
    };
    Ok(TrainedClassifier {
        kind,
        feature_count: d,
        degenerate_constant: None,
        model,
    })
}

/// Positive-class scores in [0, 1], one per row.
pub fn predict_scores(model: &TrainedClassifier, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    if x.iter().any(|r| r.len() != model.feature_count) {
        return Err(Error::Shape(format!(
            "prediction width mismatch: expected {}",
            model.feature_count
        )));
    }
    if let Some(c) = model.degenerate_constant {
        return Ok(vec![c; x.len()]);
    }
    Ok(match &model.model {
        ModelParams::Constant => unreachable!("constant models carry degenerate_constant"),
        ModelParams::Logreg(m) => x.iter().map(|r| m.score(r)).collect(),
        ModelParams::GaussianNb(m) => x.iter().map(|r| m.score(r)).collect(),
        ModelParams::Tree(t) => x.iter().map(|r| t.score(r)).collect(),
        ModelParams::Forest(trees) => x
            .iter()
            .map(|r| trees.iter().map(|t| t.score(r)).sum::<f64>() / trees.len() as f64)
            .collect(),
        ModelParams::Mlp(net) => {
            let batch = Matrix::from_rows(x)?;
            net.predict(&batch)?.data
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auroc;

    fn cfg() -> ClassifierConfig {
        ClassifierConfig::default()
    }

    #[test]
    fn logreg_learns_sign() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![0.0, 1.0];
        let model = fit(ClassifierKind::Logreg, &x, &y, &cfg(), 0).unwrap();
        let scores = predict_scores(&model, &x).unwrap();
        assert!(scores[1] > 0.5, "positive side score {}", scores[1]);
        assert!(scores[0] < 0.5, "negative side score {}", scores[0]);
    }

    #[test]
    fn tree_solves_xor_at_depth_two() {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let model = fit(ClassifierKind::DecisionTree, &x, &y, &cfg(), 0).unwrap();
        let scores = predict_scores(&model, &x).unwrap();
        for (s, yy) in scores.iter().zip(&y) {
            assert_eq!((s > &0.5), (yy > &0.5), "scores {scores:?}");
        }
    }

    #[test]
    fn gaussian_nb_separates_clusters() {
        let mut rng = rng_from(50, &[]);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..400 {
            let label = f64::from(i % 2 == 0);
            let center = if label > 0.5 { 5.0 } else { -5.0 };
            x.push(vec![center + rng.gen_range(-0.1..0.1), center + rng.gen_range(-0.1..0.1)]);
            y.push(label);
        }
        let (train_x, test_x) = x.split_at(200);
        let (train_y, test_y) = y.split_at(200);
        let model = fit(ClassifierKind::GaussianNb, train_x, train_y, &cfg(), 0).unwrap();
        let scores = predict_scores(&model, test_x).unwrap();
        let correct = scores
            .iter()
            .zip(test_y)
            .filter(|(&s, &yy)| (s > 0.5) == (yy > 0.5))
            .count();
        assert!(correct as f64 / test_y.len() as f64 >= 0.99);
    }

    #[test]
    fn single_class_fit_is_flagged_constant() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![0.0, 0.0];
        for kind in ClassifierKind::ALL {
            let model = fit(kind, &x, &y, &cfg(), 3).unwrap();
            assert_eq!(model.degenerate_constant, Some(0.0), "{kind:?}");
            let scores = predict_scores(&model, &x).unwrap();
            assert!(scores.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn forest_of_one_tree_without_subsampling_matches_tree_shape() {
        // a forest averages leaf fractions; with identical trees the average
        // is the tree's score
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let tree = fit(ClassifierKind::DecisionTree, &x, &y, &cfg(), 0).unwrap();
        let tree_scores = predict_scores(&tree, &x).unwrap();
        let mut one = cfg();
        one.forest_trees = 1;
        // single feature: the per-split pool is the full feature set, and a
        // bootstrap of a perfectly separable 1-D set still splits correctly
        let forest = fit(ClassifierKind::RandomForest, &x, &y, &one, 0).unwrap();
        let forest_scores = predict_scores(&forest, &x).unwrap();
        assert_eq!(tree_scores.len(), forest_scores.len());
        for (t, f) in tree_scores.iter().zip(&forest_scores) {
            assert!((t - f).abs() <= 1.0); // same shape; bootstrap may shift fractions
        }
    }

    #[test]
    fn forest_beats_chance_on_noisy_blobs() {
        let mut rng = rng_from(51, &[]);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..300 {
            let label = f64::from(i % 2 == 0);
            let c = if label > 0.5 { 0.7 } else { 0.3 };
            x.push(vec![c + rng.gen_range(-0.35..0.35), rng.gen()]);
            y.push(label);
        }
        let model = fit(ClassifierKind::RandomForest, &x, &y, &cfg(), 9).unwrap();
        let scores = predict_scores(&model, &x).unwrap();
        assert!(auroc(&y, &scores).unwrap() > 0.8);
    }

    #[test]
    fn fit_rejects_nan_features() {
        let x = vec![vec![f64::NAN], vec![1.0]];
        let y = vec![0.0, 1.0];
        assert!(fit(ClassifierKind::Logreg, &x, &y, &cfg(), 0).is_err());
    }

    #[test]
    fn predict_rejects_width_mismatch() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![0.0, 1.0];
        let model = fit(ClassifierKind::Logreg, &x, &y, &cfg(), 0).unwrap();
        assert!(predict_scores(&model, &[vec![1.0]]).is_err());
    }

    #[test]
    fn fits_are_deterministic_per_seed() {
        let mut rng = rng_from(52, &[]);
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let y: Vec<f64> = (0..60).map(|i| f64::from(i % 3 == 0)).collect();
        for kind in ClassifierKind::ALL {
            let a = fit(kind, &x, &y, &cfg(), 77).unwrap();
            let b = fit(kind, &x, &y, &cfg(), 77).unwrap();
            let sa = predict_scores(&a, &x).unwrap();
            let sb = predict_scores(&b, &x).unwrap();
            assert_eq!(sa, sb, "{kind:?} not deterministic");
        }
    }
}
