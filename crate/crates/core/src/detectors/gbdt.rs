//! Second-order gradient boosting on logistic loss with exact greedy splits.
//!
//! Trees grow level by level. For each feature the explicitly stored
//! entries are pre-sorted once; implicit zeros of a sparse matrix form one
//! block per node whose statistics are the node total minus the explicit
//! part. Rows with `x < threshold` go left, so ties go right.

use serde::{Deserialize, Serialize};

use super::config::{GbdtConfig, TrainConfig};
use super::features::FeatureMatrix;
use super::split::check_labels;
use crate::error::Result;
use crate::par::{map_range, Parallelism};
use crate::util::sigmoid;

const MIN_GAIN: f64 = 1e-10;
const FEATURE_BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { weight: f64 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_weight(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { weight } => return weight,
                TreeNode::Split { feature, threshold, left, right } => {
                    k = if row(feature as usize) < threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left as usize).max(go(t, right as usize)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub feature_space: String,
    pub n_features: usize,
}

impl GbdtModel {
    pub fn margin(&self, x: &FeatureMatrix, i: usize) -> f64 {
        let row = x.row(i);
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.leaf_weight(|f| row.get(f))).sum::<f64>()
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64, n: usize) {
        self.g += g;
        self.h += h;
        self.n += n;
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.gain > x.gain { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

struct Columns {
    /// Per feature: `(value, row)` sorted by value, then row.
    entries: Vec<Vec<(f64, u32)>>,
}

impl Columns {
    fn build(x: &FeatureMatrix) -> Self {
        let mut entries: Vec<Vec<(f64, u32)>> = vec![Vec::new(); x.n_features];
        for i in 0..x.n_rows() {
            x.row(i).for_each(|f, v| entries[f].push((v, i as u32)));
        }
        for e in &mut entries {
            e.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        Columns { entries }
    }
}

struct Level<'a> {
    node_of_row: &'a [i32],
    totals: &'a [Stats],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbdtConfig,
}

impl Level<'_> {
    fn gain(&self, left: Stats, total: Stats) -> Option<f64> {
        let right = Stats {
            g: total.g - left.g,
            h: total.h - left.h,
            n: total.n - left.n,
        };
        let mcw = self.cfg.min_child_weight;
        if left.n == 0 || right.n == 0 || left.h < mcw || right.h < mcw {
            return None;
        }
        let l = self.cfg.lambda;
        let score = |s: Stats| s.g * s.g / (s.h + l);
        Some(0.5 * (score(left) + score(right) - score(total)))
    }

    /// Best split of every active node on feature `f`.
    fn scan(&self, f: usize, entries: &[(f64, u32)], best: &mut [Option<Candidate>], scratch: &mut Scratch) {
        let k = self.totals.len();
        scratch.reset(k);
        for &(_, row) in entries {
            let node = self.node_of_row[row as usize];
            if node >= 0 {
                let r = row as usize;
                scratch.explicit[node as usize].add(self.grad[r], self.hess[r], 1);
            }
        }
        for node in 0..k {
            let e = scratch.explicit[node];
            let t = self.totals[node];
            scratch.zero[node] = Stats {
                g: t.g - e.g,
                h: t.h - e.h,
                n: t.n - e.n,
            };
        }
        for &(v, row) in entries {
            let node = self.node_of_row[row as usize];
            if node < 0 {
                continue;
            }
            let node = node as usize;
            if !scratch.zero_done[node] && v > 0.0 {
                scratch.zero_done[node] = true;
                let z = scratch.zero[node];
                if z.n > 0 {
                    self.step(f, node, 0.0, z, best, scratch);
                }
            }
            let r = row as usize;
            self.step(
                f,
                node,
                v,
                Stats {
                    g: self.grad[r],
                    h: self.hess[r],
                    n: 1,
                },
                best,
                scratch,
            );
        }
        for node in 0..k {
            let z = scratch.zero[node];
            if !scratch.zero_done[node] && z.n > 0 {
                self.step(f, node, 0.0, z, best, scratch);
            }
        }
    }

    fn step(&self, f: usize, node: usize, v: f64, s: Stats, best: &mut [Option<Candidate>], scratch: &mut Scratch) {
        if let Some(prev) = scratch.last[node] {
            if v > prev {
                if let Some(gain) = self.gain(scratch.acc[node], self.totals[node]) {
                    if gain > MIN_GAIN && best[node].is_none_or(|b| gain > b.gain) {
                        best[node] = Some(Candidate {
                            gain,
                            feature: f,
                            threshold: prev + (v - prev) / 2.0,
                        });
                    }
                }
            }
        }
        scratch.acc[node].add(s.g, s.h, s.n);
        scratch.last[node] = Some(v);
    }
}

#[derive(Default)]
struct Scratch {
    explicit: Vec<Stats>,
    zero: Vec<Stats>,
    zero_done: Vec<bool>,
    acc: Vec<Stats>,
    last: Vec<Option<f64>>,
}

impl Scratch {
    fn reset(&mut self, k: usize) {
        self.explicit.clear();
        self.explicit.resize(k, Stats::default());
        self.zero.clear();
        self.zero.resize(k, Stats::default());
        self.zero_done.clear();
        self.zero_done.resize(k, false);
        self.acc.clear();
        self.acc.resize(k, Stats::default());
        self.last.clear();
        self.last.resize(k, None);
    }
}

fn leaf(s: Stats, lambda: f64) -> TreeNode {
    let w = if s.h + lambda > 0.0 { -s.g / (s.h + lambda) } else { 0.0 };
    TreeNode::Leaf { weight: w }
}

fn build_tree(x: &FeatureMatrix, cols: &Columns, grad: &[f64], hess: &[f64], cfg: &GbdtConfig, mode: Parallelism) -> Tree {
    let n = x.n_rows();
    let mut root = Stats::default();
    for i in 0..n {
        root.add(grad[i], hess[i], 1);
    }
    // Tree nodes are filled in as splits are decided; `frontier[k]` is the
    // tree index of active node `k`.
    let mut nodes = vec![leaf(root, cfg.lambda)];
    let mut frontier = vec![0usize];
    let mut totals = vec![root];
    let mut node_of_row = vec![0i32; n];
    for _depth in 0..cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        let level = Level {
            node_of_row: &node_of_row,
            totals: &totals,
            grad,
            hess,
            cfg,
        };
        let k = frontier.len();
        let n_blocks = x.n_features.div_ceil(FEATURE_BLOCK);
        let per_block = map_range(n_blocks, mode, |b| {
            let mut best = vec![None; k];
            let mut scratch = Scratch::default();
            for f in b * FEATURE_BLOCK..((b + 1) * FEATURE_BLOCK).min(x.n_features) {
                if !cols.entries[f].is_empty() {
                    level.scan(f, &cols.entries[f], &mut best, &mut scratch);
                }
            }
            best
        });
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        for block in per_block {
            for (b, c) in best.iter_mut().zip(block) {
                *b = better(*b, c);
            }
        }
        let mut next_frontier = Vec::new();
        let mut next_totals = Vec::new();
        let mut child_of: Vec<Option<(i32, i32)>> = vec![None; k];
        for (a, cand) in best.iter().enumerate() {
            let Some(c) = cand else { continue };
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes.push(TreeNode::Leaf { weight: 0.0 });
            nodes.push(TreeNode::Leaf { weight: 0.0 });
            nodes[frontier[a]] = TreeNode::Split {
                feature: c.feature as u32,
                threshold: c.threshold,
                left: l as u32,
                right: r as u32,
            };
            child_of[a] = Some((next_frontier.len() as i32, next_frontier.len() as i32 + 1));
            next_frontier.push(l);
            next_frontier.push(r);
            next_totals.push(Stats::default());
            next_totals.push(Stats::default());
        }
        for i in 0..n {
            let a = node_of_row[i];
            if a < 0 {
                continue;
            }
            node_of_row[i] = match (child_of[a as usize], best[a as usize]) {
                (Some((l, r)), Some(c)) => {
                    let side = if x.row(i).get(c.feature) < c.threshold { l } else { r };
                    next_totals[side as usize].add(grad[i], hess[i], 1);
                    side
                }
                _ => -1,
            };
        }
        for (a, &t) in next_frontier.iter().zip(&next_totals) {
            nodes[*a] = leaf(t, cfg.lambda);
        }
        frontier = next_frontier;
        totals = next_totals;
    }
    Tree { nodes }
}

/// Boost `cfg.gbdt.n_rounds` trees from a base margin of 0.
pub fn train_gbdt(x: &FeatureMatrix, y: &[u8], cfg: &TrainConfig) -> Result<GbdtModel> {
    cfg.validate()?;
    check_labels(y, x.n_rows())?;
    let g = &cfg.gbdt;
    let cols = Columns::build(x);
    let n = x.n_rows();
    let mut margin = vec![0.0; n];
    let mut model = GbdtModel {
        trees: Vec::with_capacity(g.n_rounds),
        learning_rate: g.learning_rate,
        base_score: 0.0,
        feature_space: x.space.clone(),
        n_features: x.n_features,
    };
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..g.n_rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - y[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let tree = build_tree(x, &cols, &grad, &hess, g, cfg.parallelism);
        let w = map_range(n, cfg.parallelism, |i| {
            let row = x.row(i);
            tree.leaf_weight(|f| row.get(f))
        });
        for (m, w) in margin.iter_mut().zip(w) {
            *m += g.learning_rate * w;
        }
        model.trees.push(tree);
    }
    Ok(model)
}

pub fn predict_gbdt(m: &GbdtModel, x: &FeatureMatrix, mode: Parallelism) -> Result<Vec<f64>> {
    x.check_space(&m.feature_space, m.n_features)?;
    Ok(map_range(x.n_rows(), mode, |i| sigmoid(m.margin(x, i))))
}
