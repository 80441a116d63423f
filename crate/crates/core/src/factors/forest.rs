//! Bagged CART regression trees over `(hour, dow, month)`.
//!
//! Rows sharing a time key have identical features and can never be
//! separated by a split, so each tree is grown on per-key aggregates of its
//! bootstrap sample (multiplicity, response sum). This is the same tree CART
//! would grow on the expanded sample, at a cost bounded by the key grid.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FactorError, FactorRow, TimeKey, GRID_SIZE};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Minimum samples (counting bootstrap multiplicity) in each leaf.
    pub min_leaf: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    /// Draw a bootstrap sample per tree; otherwise every tree sees all rows.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            min_leaf: 5,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Feature 0 = hour, 1 = dow, 2 = month. Values `<= threshold` go left.
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

fn feature(key: TimeKey, f: u8) -> u8 {
    match f {
        0 => key.hour(),
        1 => key.dow(),
        _ => key.month(),
    }
}

impl Tree {
    pub fn predict(&self, key: TimeKey) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature: f,
                    threshold,
                    left,
                    right,
                } => {
                    i = if f64::from(feature(key, *f)) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, key: TimeKey) -> f64 {
        self.trees.iter().map(|t| t.predict(key)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestFit {
    pub forest: Forest,
    /// Per training row, the mean prediction of trees that did not see it.
    pub oob: Vec<Option<f64>>,
}

/// Multiplicity and response sum of one key within a tree's sample.
#[derive(Debug, Clone, Copy)]
struct Cell {
    key: TimeKey,
    weight: f64,
    sum: f64,
}

struct Grower<'a> {
    params: &'a ForestParams,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&mut self, cells: &[Cell]) -> u32 {
        let (w, s) = cells
            .iter()
            .fold((0.0, 0.0), |(w, s), c| (w + c.weight, s + c.sum));
        self.nodes.push(Node::Leaf { value: s / w });
        (self.nodes.len() - 1) as u32
    }

    /// Best split by squared-error reduction. Ties keep the first candidate
    /// in (feature, threshold) order.
    fn best_split(&self, cells: &[Cell]) -> Option<(u8, f64)> {
        let min_leaf = self.params.min_leaf.max(1) as f64;
        let (total_w, total_s) = cells
            .iter()
            .fold((0.0, 0.0), |(w, s), c| (w + c.weight, s + c.sum));
        let parent = total_s * total_s / total_w;
        let mut best: Option<(u8, f64, f64)> = None;
        for f in 0..3u8 {
            let mut bins = [(0.0f64, 0.0f64); 24];
            for c in cells {
                let b = &mut bins[feature(c.key, f) as usize];
                b.0 += c.weight;
                b.1 += c.sum;
            }
            let present: Vec<usize> = (0..24).filter(|&v| bins[v].0 > 0.0).collect();
            let (mut lw, mut ls) = (0.0, 0.0);
            for pair in present.windows(2) {
                lw += bins[pair[0]].0;
                ls += bins[pair[0]].1;
                let (rw, rs) = (total_w - lw, total_s - ls);
                if lw < min_leaf || rw < min_leaf {
                    continue;
                }
                let gain = ls * ls / lw + rs * rs / rw - parent;
                let tol = 1e-12 * parent.abs().max(1e-300);
                if gain > tol && best.is_none_or(|b| gain > b.2) {
                    best = Some((f, (pair[0] + pair[1]) as f64 / 2.0, gain));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&mut self, cells: &mut [Cell], depth: usize) -> u32 {
        let w: f64 = cells.iter().map(|c| c.weight).sum();
        let splittable = cells.len() > 1
            && w >= 2.0 * self.params.min_leaf.max(1) as f64
            && self.params.max_depth.is_none_or(|d| depth < d);
        let split = if splittable { self.best_split(cells) } else { None };
        let Some((f, threshold)) = split else {
            return self.leaf(cells);
        };
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: f64::NAN });
        let mid = partition(cells, |c| f64::from(feature(c.key, f)) <= threshold);
        let (l, r) = cells.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: f,
            threshold,
            left,
            right,
        };
        id as u32
    }
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition<T: Copy>(v: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let (yes, no): (Vec<T>, Vec<T>) = v.iter().partition(|x| pred(x));
    let n = yes.len();
    for (slot, x) in v.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = x;
    }
    n
}

fn grow_tree(rows: &[FactorRow], params: &ForestParams, seed: u64, t: usize) -> (Tree, Vec<u64>) {
    let n = rows.len();
    let mut in_bag = vec![0u64; n.div_ceil(64)];
    let mut acc = vec![(0.0f64, 0.0f64); GRID_SIZE];
    if params.bootstrap {
        let mut rng = rng::indexed_substream(seed, "forest/tree", t as u64);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            in_bag[i / 64] |= 1 << (i % 64);
            let a = &mut acc[rows[i].key.index()];
            a.0 += 1.0;
            a.1 += rows[i].y;
        }
    } else {
        for (i, r) in rows.iter().enumerate() {
            in_bag[i / 64] |= 1 << (i % 64);
            let a = &mut acc[r.key.index()];
            a.0 += 1.0;
            a.1 += r.y;
        }
    }
    let mut cells: Vec<Cell> = acc
        .iter()
        .enumerate()
        .filter(|(_, a)| a.0 > 0.0)
        .map(|(i, a)| Cell {
            key: TimeKey::from_index(i),
            weight: a.0,
            sum: a.1,
        })
        .collect();
    let mut g = Grower {
        params,
        nodes: Vec::new(),
    };
    g.grow(&mut cells, 0);
    (Tree { nodes: g.nodes }, in_bag)
}

pub fn fit_forest(
    rows: &[FactorRow],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestFit, FactorError> {
    if rows.is_empty() {
        return Err(FactorError::Empty);
    }
    if params.n_trees == 0 {
        return Err(FactorError::InvalidParams("n_trees must be positive".into()));
    }
    if rows.len() < params.min_leaf {
        return Err(FactorError::InsufficientRows {
            rows: rows.len(),
            features: params.min_leaf,
        });
    }
    let grown: Vec<(Tree, Vec<u64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(rows, params, seed, t))
        .collect();

    let tables: Vec<Vec<f64>> = grown
        .par_iter()
        .map(|(tree, _)| TimeKey::grid().map(|k| tree.predict(k)).collect())
        .collect();
    let oob = rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let (mut sum, mut n) = (0.0, 0usize);
            for ((_, bag), table) in grown.iter().zip(&tables) {
                if bag[i / 64] & (1 << (i % 64)) == 0 {
                    sum += table[r.key.index()];
                    n += 1;
                }
            }
            (n > 0).then(|| sum / n as f64)
        })
        .collect();
    Ok(ForestFit {
        forest: Forest {
            params: *params,
            trees: grown.into_iter().map(|(t, _)| t).collect(),
        },
        oob,
    })
}
