use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};

/// Squared-error gradient boosting: each round fits a tree to the current
/// residuals and adds it scaled by the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Gbt {
    /// Fits the ensemble and returns it with the training RMSE after each
    /// round (entry 0 is the constant initial model).
    pub fn fit_with_trace(x: &[[f64; 3]], y: &[f64], rounds: usize, learning_rate: f64, params: TreeParams) -> (Self, Vec<f64>) {
        let n = x.len();
        let init = y.iter().sum::<f64>() / n as f64;
        let mut fitted = vec![init; n];
        let mut residual = vec![0.0; n];
        let rmse = |fitted: &[f64]| (y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
        let mut trace = Vec::with_capacity(rounds + 1);
        trace.push(rmse(&fitted));
        // every feature is examined at every split, so the rng is never consulted
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut trees = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            for ((r, a), f) in residual.iter_mut().zip(y).zip(&fitted) {
                *r = a - f;
            }
            let tree = Tree::fit(x, &residual, (0..n).collect(), TreeParams { max_features: 3, ..params }, &mut rng);
            for (f, xi) in fitted.iter_mut().zip(x) {
                *f += learning_rate * tree.predict(xi);
            }
            trees.push(tree);
            trace.push(rmse(&fitted));
        }
        (
            Self {
                init,
                learning_rate,
                trees,
            },
            trace,
        )
    }

    pub fn predict(&self, x: &[f64; 3]) -> f64 {
        let mut f = self.init;
        for t in &self.trees {
            f += self.learning_rate * t.predict(x);
        }
        f
    }
}
