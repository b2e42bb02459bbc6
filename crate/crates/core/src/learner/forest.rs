//! Bagged CART classification trees with Gini splits.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree_count: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(p))`.
    pub feature_subset_size: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            tree_count: 100,
            max_depth: None,
            min_leaf: 1,
            feature_subset_size: None,
        }
    }
}

impl ForestParams {
    pub fn mtry(&self, n_features: usize) -> usize {
        self.feature_subset_size
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(class) => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    params: &'a ForestParams,
    mtry: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

fn majority(counts: &[usize]) -> usize {
    // first maximum wins: ties go to the smaller class index
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

fn purity_score(counts: &[usize], n: usize) -> f64 {
    // sum c^2 / n; larger is purer (Gini = 1 - score / n)
    counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &r in rows.iter() {
            counts[self.y[r]] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority(&counts)));

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || rows.len() < 2 * self.params.min_leaf {
            return id;
        }

        let Some((feature, threshold)) = self.best_split(rows, &counts) else {
            return id;
        };
        let mut split = 0;
        for i in 0..rows.len() {
            if self.x[rows[i]][feature] <= threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
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

    fn best_split(&mut self, rows: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len();
        let n_features = self.x[rows[0]].len();
        let parent = purity_score(counts, n);
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut left = vec![0usize; self.n_classes];
        let mut right = vec![0usize; self.n_classes];

        for feature in index::sample(self.rng, n_features, self.mtry).iter() {
            column.clear();
            column.extend(rows.iter().map(|&r| (self.x[r][feature], self.y[r])));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            if column[0].0 == column[n - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            right.copy_from_slice(counts);
            for i in 0..n - 1 {
                let class = column[i].1;
                left[class] += 1;
                right[class] -= 1;
                let nl = i + 1;
                let nr = n - nl;
                if column[i].0 == column[i + 1].0 || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let score = purity_score(&left, nl) + purity_score(&right, nr);
                if best.is_none_or(|(s, _, _)| score > s) {
                    let threshold = 0.5 * (column[i].0 + column[i + 1].0);
                    best = Some((score, feature, threshold));
                }
            }
        }
        match best {
            Some((score, feature, threshold)) if score > parent + 1e-12 => Some((feature, threshold)),
            _ => None,
        }
    }
}

/// Ensemble of trees over class indices `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    n_classes: usize,
}

impl Forest {
    /// Fits `tree_count` trees, each on a bootstrap resample of the rows.
    /// Tree `t` draws from a stream derived from `(seed, t)`.
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &ForestParams, seed: u64) -> Forest {
        let n = x.len();
        let n_features = x.first().map_or(0, |r| r.len());
        let mtry = params.mtry(n_features);
        let trees = (0..params.tree_count.max(1))
            .map(|t| {
                let mut rng = seed::rng_from(seed, &[t as u64]);
                let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut b = Builder {
                    x,
                    y,
                    n_classes,
                    params,
                    mtry,
                    rng: &mut rng,
                    nodes: Vec::new(),
                };
                if n_features == 0 {
                    let mut counts = vec![0usize; n_classes];
                    rows.iter().for_each(|&r| counts[y[r]] += 1);
                    b.nodes.push(Node::Leaf(majority(&counts)));
                } else {
                    b.grow(&mut rows, 0);
                }
                Tree { nodes: b.nodes }
            })
            .collect();
        Forest { trees, n_classes }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        majority(&votes)
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}
