use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{Predictions, Targets};
use crate::error::{Error, Result};

/// How many candidate features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `max(1, floor(sqrt(p)))` features, redrawn at every node.
    Sqrt,
}

impl MaxFeatures {
    fn count(self, p: usize) -> usize {
        match self {
            MaxFeatures::All => p,
            MaxFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            max_features: MaxFeatures::All,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(Leaf),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Leaf {
    Class(usize),
    Value(f64),
}

/// CART tree: Gini impurity for classes, squared error for values.
/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

enum Labels<'a> {
    Classes(&'a [usize], usize),
    Values(&'a [f64]),
}

struct Builder<'a, R: ?Sized> {
    x: &'a Array2<f64>,
    labels: Labels<'a>,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Fits on `x` rows listed in `rows` (duplicates allowed, as in a bootstrap sample).
    pub fn fit<R: Rng + ?Sized>(
        x: &Array2<f64>,
        targets: &Targets,
        rows: &[usize],
        params: TreeParams,
        rng: &mut R,
    ) -> Result<Self> {
        if rows.is_empty() || x.nrows() != targets.len() {
            return Err(Error::Length {
                expected: x.nrows(),
                got: targets.len(),
            });
        }
        if params.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        let labels = match targets {
            Targets::Classes { y, n_classes } => Labels::Classes(y, *n_classes),
            Targets::Values(v) => Labels::Values(v),
        };
        let mut b = Builder {
            x,
            labels,
            params,
            rng,
            nodes: Vec::new(),
        };
        let mut rows = rows.to_vec();
        b.grow(&mut rows, 0);
        Ok(Self { nodes: b.nodes })
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn leaf_for(&self, row: ndarray::ArrayView1<f64>) -> &Leaf {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(l) => return l,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Predictions {
        let leaves: Vec<&Leaf> = x.rows().into_iter().map(|r| self.leaf_for(r)).collect();
        match leaves.first() {
            Some(Leaf::Value(_)) => Predictions::Values(
                leaves
                    .iter()
                    .map(|l| match l {
                        Leaf::Value(v) => *v,
                        Leaf::Class(_) => unreachable!("mixed leaves"),
                    })
                    .collect(),
            ),
            _ => Predictions::Classes(
                leaves
                    .iter()
                    .map(|l| match l {
                        Leaf::Class(c) => *c,
                        Leaf::Value(_) => unreachable!("mixed leaves"),
                    })
                    .collect(),
            ),
        }
    }
}

/// Node statistics sufficient for both the leaf value and the split score.
#[derive(Clone)]
enum Stats {
    Counts(Vec<f64>),
    Sums { sum: f64, sq: f64 },
}

impl Stats {
    fn empty(labels: &Labels) -> Self {
        match labels {
            Labels::Classes(_, k) => Stats::Counts(vec![0.0; *k]),
            Labels::Values(_) => Stats::Sums { sum: 0.0, sq: 0.0 },
        }
    }

    fn add(&mut self, labels: &Labels, row: usize, sign: f64) {
        match (self, labels) {
            (Stats::Counts(c), Labels::Classes(y, _)) => c[y[row]] += sign,
            (Stats::Sums { sum, sq }, Labels::Values(v)) => {
                *sum += sign * v[row];
                *sq += sign * v[row] * v[row];
            }
            _ => unreachable!(),
        }
    }

    /// `n * (1 - impurity)` up to a constant: larger is purer.
    /// Gini: sum c_k^2 / n. Variance: sum^2 / n.
    fn proxy(&self, n: f64) -> f64 {
        match self {
            Stats::Counts(c) => c.iter().map(|v| v * v).sum::<f64>() / n,
            Stats::Sums { sum, .. } => sum * sum / n,
        }
    }

    fn is_pure(&self, n: f64) -> bool {
        match self {
            Stats::Counts(c) => c.contains(&n),
            Stats::Sums { sum, sq } => sq - sum * sum / n <= 1e-12 * sq.abs().max(1.0),
        }
    }

    fn leaf(&self, n: f64) -> Leaf {
        match self {
            Stats::Counts(c) => {
                let mut best = 0;
                for (k, &v) in c.iter().enumerate() {
                    if v > c[best] {
                        best = k;
                    }
                }
                Leaf::Class(best)
            }
            Stats::Sums { sum, .. } => Leaf::Value(sum / n),
        }
    }
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let n = rows.len() as f64;
        let mut stats = Stats::empty(&self.labels);
        for &r in rows.iter() {
            stats.add(&self.labels, r, 1.0);
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(stats.leaf(n)));
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || rows.len() < 2 * self.params.min_samples_leaf || stats.is_pure(n) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows, &stats) else {
            return id;
        };
        let mut split_at = 0;
        for i in 0..rows.len() {
            if self.x[[rows[i], feature]] <= threshold {
                rows.swap(i, split_at);
                split_at += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split_at);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], parent: &Stats) -> Option<(usize, f64)> {
        let p = self.x.ncols();
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut order: Vec<usize> = (0..p).collect();
        if self.params.max_features != MaxFeatures::All {
            order.shuffle(self.rng);
        }
        let wanted = self.params.max_features.count(p);
        let base = parent.proxy(n as f64);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &f in &order {
            if visited == wanted {
                break;
            }
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.x[[r, f]], r)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            visited += 1;
            let mut left = Stats::empty(&self.labels);
            let mut right = parent.clone();
            for i in 1..n {
                left.add(&self.labels, pairs[i - 1].1, 1.0);
                right.add(&self.labels, pairs[i - 1].1, -1.0);
                if i < min_leaf || n - i < min_leaf || pairs[i - 1].0 == pairs[i].0 {
                    continue;
                }
                let gain = left.proxy(i as f64) + right.proxy((n - i) as f64) - base;
                if gain > -1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    let (a, b) = (pairs[i - 1].0, pairs[i].0);
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((gain, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
