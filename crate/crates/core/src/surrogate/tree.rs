//! CART regression trees with variance-reduction splits.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const N_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
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

/// A fitted tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; fewer than [`N_FEATURES`] draws a random subset.
    pub max_features: usize,
}

impl Tree {
    pub fn predict(&self, x: &[f64; 3]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Fits a tree on the rows listed in `rows` (duplicates allowed, as
    /// produced by bootstrap sampling).
    pub fn fit(x: &[[f64; 3]], y: &[f64], rows: Vec<usize>, params: TreeParams, rng: &mut impl Rng) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        tree.grow(x, y, rows, 0, params, rng);
        tree
    }

    fn grow(
        &mut self,
        x: &[[f64; 3]],
        y: &[f64],
        rows: Vec<usize>,
        depth: usize,
        params: TreeParams,
        rng: &mut impl Rng,
    ) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| y[r]).sum();
        let mean = sum / n as f64;
        self.nodes.push(Node::Leaf { value: mean });

        let sse: f64 = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum();
        if depth >= params.max_depth || n < 2 * params.min_leaf.max(1) || sse <= 1e-24 * n as f64 {
            return id;
        }
        let Some(split) = best_split(x, y, &rows, sum, params, rng) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| x[r][split.feature] <= split.threshold);
        let left = self.grow(x, y, left_rows, depth + 1, params, rng);
        let right = self.grow(x, y, right_rows, depth + 1, params, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn best_split(
    x: &[[f64; 3]],
    y: &[f64],
    rows: &[usize],
    total: f64,
    params: TreeParams,
    rng: &mut impl Rng,
) -> Option<Split> {
    let n = rows.len();
    let features: Vec<usize> = if params.max_features >= N_FEATURES {
        (0..N_FEATURES).collect()
    } else {
        let mut f = sample(rng, N_FEATURES, params.max_features.max(1)).into_vec();
        f.sort_unstable();
        f
    };
    let parent = total * total / n as f64;
    let min_leaf = params.min_leaf.max(1);
    let mut best: Option<Split> = None;
    let mut order = rows.to_vec();
    for &f in &features {
        order.copy_from_slice(rows);
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_sum = 0.0;
        for i in 1..n {
            left_sum += y[order[i - 1]];
            let (lo, hi) = (x[order[i - 1]][f], x[order[i]][f]);
            if lo == hi || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64 - parent;
            if gain > 1e-12 && best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(Split {
                    feature: f,
                    threshold: lo + (hi - lo) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(depth: usize, leaf: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_leaf: leaf,
            max_features: 3,
        }
    }

    #[test]
    fn step_function_is_split_exactly() {
        let x: Vec<[f64; 3]> = (0..20).map(|i| [i as f64, 0.0, 0.0]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 7 { 1.0 } else { 5.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = Tree::fit(&x, &y, (0..20).collect(), params(4, 1), &mut rng);
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.predict(&[6.0, 0.0, 0.0]), 1.0);
        assert_eq!(t.predict(&[6.6, 0.0, 0.0]), 5.0);
        match t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 6.5);
            }
            _ => panic!("root should split"),
        }
    }

    #[test]
    fn respects_depth_and_leaf_limits() {
        let x: Vec<[f64; 3]> = (0..64).map(|i| [i as f64, (i * 7 % 13) as f64, 0.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| (v[0] * 0.3).sin() + v[1]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = Tree::fit(&x, &y, (0..64).collect(), params(3, 5), &mut rng);
        assert!(t.depth() <= 3);
        assert!(t.n_leaves() <= 8);
        let mut counts = vec![0usize; t.nodes.len()];
        for v in &x {
            let mut i = 0;
            while let Node::Split { feature, threshold, left, right } = t.nodes[i] {
                i = if v[feature] <= threshold { left } else { right };
            }
            counts[i] += 1;
        }
        for (i, n) in t.nodes.iter().enumerate() {
            if matches!(n, Node::Leaf { .. }) {
                assert!(counts[i] >= 5);
            }
        }
    }

    #[test]
    fn constant_target_is_a_single_leaf() {
        let x: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 1.0, 2.0]).collect();
        let y = vec![-88.25; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = Tree::fit(&x, &y, (0..10).collect(), params(8, 1), &mut rng);
        assert_eq!(t.nodes.len(), 1);
        assert!((t.predict(&[100.0, 0.0, 0.0]) + 88.25).abs() < 1e-12);
    }
}
