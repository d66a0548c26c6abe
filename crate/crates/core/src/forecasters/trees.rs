//! Bagged multi-output regression trees.
//!
//! Each tree is grown on a bootstrap sample with variance-reduction splits,
//! considering `floor(sqrt(features))` randomly chosen features at every
//! node unless configured otherwise. A tree predicts the mean target vector
//! of its leaf; the ensemble averages the trees. Tree `i` draws from its own seeded stream, so the
//! result does not depend on how trees are scheduled across workers.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeEnsembleConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried at each node; `None` means `floor(sqrt(features))`.
    #[serde(default)]
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for TreeEnsembleConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 6,
            min_samples_leaf: 1,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub n_features: usize,
    pub n_outputs: usize,
    pub trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &TreeEnsembleConfig) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::InvalidArgument("tree ensemble needs at least one feature".into()));
        }
        if n == 0 || y.nrows() != n || y.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "features {:?} vs targets {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let data = Data {
            n,
            p,
            k: y.ncols(),
            cols: x.as_slice(),
            targets: y.transpose().as_slice().to_vec(),
        };
        let trees = par::map_range(cfg.n_trees.max(1), |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(cfg.seed, t));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow(&data, rows, cfg, &mut rng)
        });
        Ok(Self {
            n_features: p,
            n_outputs: y.ncols(),
            trees,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_outputs];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict_row(row)) {
                *o += v;
            }
        }
        let m = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= m);
        out
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), self.n_outputs);
        for (i, row) in x.row_iter().enumerate() {
            let r: Vec<f64> = row.iter().copied().collect();
            for (k, v) in self.predict_row(&r).into_iter().enumerate() {
                out[(i, k)] = v;
            }
        }
        out
    }
}

fn tree_seed(seed: u64, tree: usize) -> u64 {
    seed ^ (tree as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Data<'a> {
    n: usize,
    p: usize,
    k: usize,
    /// Column-major features.
    cols: &'a [f64],
    /// Row-major targets.
    targets: Vec<f64>,
}

impl Data<'_> {
    fn feature(&self, row: usize, f: usize) -> f64 {
        self.cols[f * self.n + row]
    }

    fn target(&self, row: usize) -> &[f64] {
        &self.targets[row * self.k..(row + 1) * self.k]
    }
}

fn grow(data: &Data<'_>, rows: Vec<usize>, cfg: &TreeEnsembleConfig, rng: &mut ChaCha8Rng) -> RegressionTree {
    let mtry = cfg
        .max_features
        .unwrap_or((data.p as f64).sqrt().floor() as usize)
        .clamp(1, data.p);
    let mut nodes = Vec::new();
    // (node index, rows, depth); children are appended after their parent.
    let mut stack = vec![(0usize, rows, 0usize)];
    nodes.push(Node::Leaf { value: Vec::new() });
    while let Some((id, rows, depth)) = stack.pop() {
        let leaf_value = mean_target(data, &rows);
        let split = if depth < cfg.max_depth && rows.len() >= 2 * cfg.min_samples_leaf.max(1) {
            let features = sample(rng, data.p, mtry).into_vec();
            best_split(data, &rows, &features, cfg.min_samples_leaf.max(1))
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| data.feature(i, feature) <= threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: Vec::new() });
                nodes.push(Node::Leaf { value: Vec::new() });
                nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
            None => nodes[id] = Node::Leaf { value: leaf_value },
        }
    }
    RegressionTree { nodes }
}

fn mean_target(data: &Data<'_>, rows: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; data.k];
    for &i in rows {
        for (a, v) in m.iter_mut().zip(data.target(i)) {
            *a += v;
        }
    }
    let n = rows.len().max(1) as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// Best `(feature, threshold)` by variance reduction, or `None` when no split helps.
///
/// Minimising the children's summed squared error is the same as maximising
/// `Σ_k S_L,k² / n_L + Σ_k S_R,k² / n_R` where `S` are target sums.
fn best_split(data: &Data<'_>, rows: &[usize], features: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let n = rows.len();
    let k = data.k;
    let mut total = vec![0.0; k];
    for &i in rows {
        for (t, v) in total.iter_mut().zip(data.target(i)) {
            *t += v;
        }
    }
    let parent: f64 = total.iter().map(|s| s * s).sum::<f64>() / n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order: Vec<usize> = rows.to_vec();
    let mut left = vec![0.0; k];
    for &f in features {
        order.sort_by(|&a, &b| data.feature(a, f).total_cmp(&data.feature(b, f)));
        left.iter_mut().for_each(|v| *v = 0.0);
        for pos in 0..n - 1 {
            for (l, v) in left.iter_mut().zip(data.target(order[pos])) {
                *l += v;
            }
            let nl = pos + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (a, b) = (data.feature(order[pos], f), data.feature(order[pos + 1], f));
            if a == b {
                continue;
            }
            let mut gain = 0.0;
            for (l, t) in left.iter().zip(&total) {
                let r = t - l;
                gain += l * l / nl as f64 + r * r / nr as f64;
            }
            if best.map_or(true, |(g, _, _)| gain > g) {
                best = Some((gain, f, 0.5 * (a + b)));
            }
        }
    }
    let (gain, f, thr) = best?;
    // Relative tolerance absorbs rounding in the running sums.
    (gain > parent * (1.0 + 1e-12) + 1e-12).then_some((f, thr))
}
