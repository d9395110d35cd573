use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gap below which two split impurities count as tied.
const TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
        histogram: Vec<usize>,
    },
}

/// CART classifier with Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
    pub features: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

/// Majority class, ties to the lowest index.
pub fn majority(histogram: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in histogram.iter().enumerate() {
        if n > histogram[best] {
            best = c;
        }
    }
    best
}

fn sum_sq(counts: &[usize]) -> f64 {
    counts.iter().map(|&c| (c * c) as f64).sum()
}

/// `n · gini` of a class histogram with `n` members.
fn scaled_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 - sum_sq(counts) / n as f64
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    classes: usize,
    params: TreeParams,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn histogram(&self, idx: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &i in idx {
            h[self.y[i]] += 1;
        }
        h
    }

    /// Best `(feature, threshold)` by weighted Gini given the rows sorted by
    /// each feature; `None` when every row has identical features.
    fn best_split(&self, orders: &[Vec<usize>], hist: &[usize]) -> Option<(usize, f64)> {
        let n = orders[0].len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut left = vec![0usize; self.classes];
        let mut right = vec![0usize; self.classes];
        for (f, order) in orders.iter().enumerate() {
            left.iter_mut().for_each(|c| *c = 0);
            for pos in 0..n - 1 {
                left[self.y[order[pos]]] += 1;
                let (a, b) = (self.x[order[pos]][f], self.x[order[pos + 1]][f]);
                if a == b {
                    continue;
                }
                let nl = pos + 1;
                for ((r, h), l) in right.iter_mut().zip(hist).zip(&left) {
                    *r = h - l;
                }
                let score = scaled_gini(&left, nl) + scaled_gini(&right, n - nl);
                if best.is_none_or(|(s, _, _)| score < s - TIE) {
                    // adjacent floats can round the midpoint up to `b`
                    let mid = a + (b - a) / 2.0;
                    best = Some((score, f, if mid < b { mid } else { a }));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    /// Grows the tree depth first with an explicit stack, numbering nodes in
    /// preorder (node, left subtree, right subtree). Each pending node keeps
    /// its rows sorted by every feature; splits partition those orders
    /// stably, so features are sorted once at the root.
    fn grow(&mut self, rows: usize) {
        let features = self.x[0].len();
        let root: Vec<Vec<usize>> = (0..features)
            .map(|f| {
                let mut o: Vec<usize> = (0..rows).collect();
                o.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
                o
            })
            .collect();
        let mut goes_left = vec![false; rows];
        // (per-feature orders, depth, parent split and whether this is its left child)
        type Pending = (Vec<Vec<usize>>, usize, Option<(usize, bool)>);
        let mut stack: Vec<Pending> = vec![(root, 0, None)];
        while let Some((orders, depth, parent)) = stack.pop() {
            let id = self.nodes.len();
            if let Some((p, is_left)) = parent {
                if let TreeNode::Split { left, right, .. } = &mut self.nodes[p] {
                    *(if is_left { left } else { right }) = id;
                }
            }
            let hist = self.histogram(&orders[0]);
            let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
            let capped = self.params.max_depth.is_some_and(|d| depth >= d);
            let split = if pure || capped || orders[0].len() < self.params.min_samples_split {
                None
            } else {
                self.best_split(&orders, &hist)
            };
            let Some((feature, threshold)) = split else {
                self.nodes.push(TreeNode::Leaf {
                    class: majority(&hist),
                    histogram: hist,
                });
                continue;
            };
            self.nodes.push(TreeNode::Split {
                feature,
                threshold,
                left: usize::MAX,
                right: usize::MAX,
            });
            for &i in &orders[0] {
                goes_left[i] = self.x[i][feature] <= threshold;
            }
            let (l, r): (Vec<Vec<usize>>, Vec<Vec<usize>>) = orders
                .into_iter()
                .map(|o| o.into_iter().partition(|&i| goes_left[i]))
                .unzip();
            stack.push((r, depth + 1, Some((id, false))));
            stack.push((l, depth + 1, Some((id, true))));
        }
    }
}

impl DecisionTree {
    /// Greedy CART fit. Zero-gain splits are allowed, so an unlimited tree
    /// separates every pair of distinct feature vectors it can.
    pub fn fit(x: &[Vec<f64>], y: &[usize], params: TreeParams) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Contract("decision tree needs at least one row".into()));
        }
        if x.len() != y.len() {
            return Err(Error::shape("fit_decision_tree", &[x.len()], &[y.len()]));
        }
        let features = x[0].len();
        if features == 0 {
            return Err(Error::Contract("decision tree needs at least one feature".into()));
        }
        if let Some(row) = x.iter().find(|r| r.len() != features) {
            return Err(Error::shape("fit_decision_tree", &[features], &[row.len()]));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite concept encoding".into()));
        }
        let mut b = Builder {
            x,
            y,
            classes: y.iter().max().map_or(1, |m| m + 1),
            params,
            nodes: Vec::new(),
        };
        b.grow(x.len());
        Ok(Self {
            nodes: b.nodes,
            features,
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
        })
    }

    pub fn predict_one(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        x.iter()
            .map(|r| {
                if r.len() != self.features {
                    Err(Error::shape("tree_predict", &[self.features], &[r.len()]))
                } else {
                    Ok(self.predict_one(r))
                }
            })
            .collect()
    }

    /// Longest root-to-leaf path, in splits.
    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, d)) = stack.pop() {
            match &self.nodes[id] {
                TreeNode::Leaf { .. } => deepest = deepest.max(d),
                TreeNode::Split { left, right, .. } => {
                    stack.push((*left, d + 1));
                    stack.push((*right, d + 1));
                }
            }
        }
        deepest
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}
