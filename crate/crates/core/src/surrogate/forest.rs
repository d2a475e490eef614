use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use crate::rng::{stream_rng, Stream};

/// Bagged regression trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(x: &[[f64; 3]], y: &[f64], n_trees: usize, bootstrap: bool, params: TreeParams, seed: u64) -> Self {
        let n = x.len();
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream_rng(seed, Stream::Forest, t as u64);
                let rows: Vec<usize> = if bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                Tree::fit(x, y, rows, params, &mut rng)
            })
            .collect();
        Self { trees }
    }

    pub fn predict(&self, x: &[f64; 3]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
