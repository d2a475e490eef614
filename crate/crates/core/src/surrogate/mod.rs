//! Regression surrogates mapping A5 parameters to each KPI.
//!
//! Five model families are provided: ordinary (ridge-stabilised) linear
//! regression, a full quartic polynomial, a single CART tree, a random
//! forest and gradient-boosted trees. Every model is fitted on features
//! standardised with training statistics and serialises to a versioned JSON
//! document.

mod forest;
mod gbt;
mod linalg;
mod poly;
mod tree;

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::handover::CopVector;
use crate::rng::{stream_rng, Stream};
use crate::sweep::AggregatedPoint;

pub use forest::Forest;
pub use gbt::Gbt;
pub use linalg::cholesky_solve;
pub use poly::{monomials, PolyModel};
pub use tree::{Node, Tree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MIN_SPLIT_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Poly4,
    DecisionTree,
    RandomForest,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Linear,
        ModelKind::Poly4,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Gbt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Poly4 => "poly4",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Gbt => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

/// Which KPI a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kpi {
    MeanRsrp,
    Hosr,
}

impl Kpi {
    pub const ALL: [Kpi; 2] = [Kpi::MeanRsrp, Kpi::Hosr];

    pub fn as_str(self) -> &'static str {
        match self {
            Kpi::MeanRsrp => "mean_rsrp",
            Kpi::Hosr => "hosr",
        }
    }

    pub fn of(self, p: &AggregatedPoint) -> f64 {
        match self {
            Kpi::MeanRsrp => p.mean_rsrp_dbm,
            Kpi::Hosr => p.hosr_pct,
        }
    }
}

impl fmt::Display for Kpi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kpi {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_rsrp" | "rsrp" => Ok(Kpi::MeanRsrp),
            "hosr" => Ok(Kpi::Hosr),
            _ => Err(Error::Config(format!("unknown KPI {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub ridge: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub n_trees: usize,
    pub max_features: usize,
    pub bootstrap: bool,
    pub rounds: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::for_kind(ModelKind::Gbt)
    }
}

impl Hyperparams {
    pub fn for_kind(kind: ModelKind) -> Self {
        let base = Self {
            ridge: 1e-8,
            max_depth: 8,
            min_leaf: 2,
            n_trees: 0,
            max_features: 3,
            bootstrap: false,
            rounds: 0,
            learning_rate: 0.0,
            seed: 0,
        };
        match kind {
            ModelKind::Linear | ModelKind::Poly4 | ModelKind::DecisionTree => base,
            ModelKind::RandomForest => Self {
                max_depth: 10,
                min_leaf: 1,
                n_trees: 200,
                max_features: 2,
                bootstrap: true,
                ..base
            },
            ModelKind::Gbt => Self {
                max_depth: 4,
                rounds: 300,
                learning_rate: 0.1,
                ..base
            },
        }
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            max_features: self.max_features,
        }
    }

    fn validate(&self, kind: ModelKind) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{kind}: {m}")));
        match kind {
            ModelKind::Linear | ModelKind::Poly4 if !(self.ridge >= 0.0) => bad("ridge must be non-negative"),
            ModelKind::DecisionTree | ModelKind::RandomForest | ModelKind::Gbt if self.min_leaf == 0 => {
                bad("min_leaf must be positive")
            }
            ModelKind::RandomForest if self.n_trees == 0 || self.max_features == 0 => {
                bad("n_trees and max_features must be positive")
            }
            ModelKind::Gbt if self.rounds == 0 || !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) => {
                bad("rounds must be positive and learning_rate in (0, 1]")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub target: Kpi,
    pub hyper: Hyperparams,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, target: Kpi) -> Self {
        Self {
            kind,
            target,
            hyper: Hyperparams::for_kind(kind),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}.json", self.kind, self.target)
    }
}

/// Zero-mean, unit-variance feature scaling from training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Standardizer {
    pub fn fit(x: &[[f64; 3]]) -> Self {
        let n = x.len() as f64;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for f in 0..3 {
            mean[f] = x.iter().map(|v| v[f]).sum::<f64>() / n;
            let var = x.iter().map(|v| (v[f] - mean[f]).powi(2)).sum::<f64>() / n;
            std[f] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64; 3]) -> [f64; 3] {
        [
            (x[0] - self.mean[0]) / self.std[0],
            (x[1] - self.mean[1]) / self.std[1],
            (x[2] - self.mean[2]) / self.std[2],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelState {
    Polynomial(PolyModel),
    Tree(Tree),
    Forest(Forest),
    Boosted(Gbt),
}

impl ModelState {
    fn predict(&self, z: &[f64; 3]) -> f64 {
        match self {
            ModelState::Polynomial(m) => m.predict(z),
            ModelState::Tree(t) => t.predict(z),
            ModelState::Forest(f) => f.predict(z),
            ModelState::Boosted(g) => g.predict(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    /// Scenario fingerprint of the training dataset; empty when unknown.
    pub fingerprint: String,
    pub spec: ModelSpec,
    pub standardizer: Standardizer,
    pub feature_min: [f64; 3],
    pub feature_max: [f64; 3],
    pub state: ModelState,
}

/// Training rows in a canonical order so fitting does not depend on how
/// the caller happened to order them.
fn canonical(x: &[[f64; 3]], y: &[f64]) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut rows: Vec<([f64; 3], f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    rows.sort_by(|a, b| {
        a.0[0]
            .total_cmp(&b.0[0])
            .then(a.0[1].total_cmp(&b.0[1]))
            .then(a.0[2].total_cmp(&b.0[2]))
            .then(a.1.total_cmp(&b.1))
    });
    rows.into_iter().unzip()
}

pub fn fit(spec: &ModelSpec, x: &[[f64; 3]], y: &[f64]) -> Result<TrainedModel> {
    if x.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if x.len() != y.len() {
        return Err(Error::Config(format!("{} feature rows but {} targets", x.len(), y.len())));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Config("training data contains non-finite values".into()));
    }
    spec.hyper.validate(spec.kind)?;
    let (x, y) = canonical(x, y);
    let standardizer = Standardizer::fit(&x);
    let z: Vec<[f64; 3]> = x.iter().map(|v| standardizer.apply(v)).collect();
    let h = &spec.hyper;
    let state = match spec.kind {
        ModelKind::Linear => ModelState::Polynomial(PolyModel::fit(1, &z, &y, h.ridge)?),
        ModelKind::Poly4 => ModelState::Polynomial(PolyModel::fit(4, &z, &y, h.ridge)?),
        ModelKind::DecisionTree => {
            let mut rng = stream_rng(h.seed, Stream::Forest, u64::MAX);
            ModelState::Tree(Tree::fit(&z, &y, (0..z.len()).collect(), h.tree_params(), &mut rng))
        }
        ModelKind::RandomForest => ModelState::Forest(Forest::fit(&z, &y, h.n_trees, h.bootstrap, h.tree_params(), h.seed)),
        ModelKind::Gbt => ModelState::Boosted(Gbt::fit_with_trace(&z, &y, h.rounds, h.learning_rate, h.tree_params()).0),
    };
    let mut feature_min = [f64::INFINITY; 3];
    let mut feature_max = [f64::NEG_INFINITY; 3];
    for v in &x {
        for f in 0..3 {
            feature_min[f] = feature_min[f].min(v[f]);
            feature_max[f] = feature_max[f].max(v[f]);
        }
    }
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        fingerprint: String::new(),
        spec: spec.clone(),
        standardizer,
        feature_min,
        feature_max,
        state,
    })
}

/// Fits `spec` on aggregated sweep points, using the KPI named by `spec.target`.
pub fn fit_points(spec: &ModelSpec, points: &[AggregatedPoint], fingerprint: &str) -> Result<TrainedModel> {
    let x: Vec<[f64; 3]> = points.iter().map(|p| p.cop.features()).collect();
    let y: Vec<f64> = points.iter().map(|p| spec.target.of(p)).collect();
    let mut m = fit(spec, &x, &y)?;
    m.fingerprint = fingerprint.to_string();
    Ok(m)
}

impl TrainedModel {
    /// Prediction for raw (unstandardised) features; success-rate models are
    /// clamped to [0, 100].
    pub fn predict_features(&self, x: &[f64; 3]) -> f64 {
        let raw = self.state.predict(&self.standardizer.apply(x));
        match self.spec.target {
            Kpi::Hosr => raw.clamp(0.0, 100.0),
            Kpi::MeanRsrp => raw,
        }
    }

    pub fn predict(&self, cop: &CopVector) -> f64 {
        self.predict_features(&cop.features())
    }

    /// True when `x` lies outside the range seen during training.
    pub fn is_extrapolation(&self, x: &[f64; 3]) -> bool {
        (0..3).any(|f| x[f] < self.feature_min[f] || x[f] > self.feature_max[f])
    }

    /// Slopes and intercept of a linear model in raw feature units.
    pub fn linear_coefficients(&self) -> Option<(f64, [f64; 3])> {
        let ModelState::Polynomial(p) = &self.state else { return None };
        if p.degree != 1 {
            return None;
        }
        let s = &self.standardizer;
        let c = &p.coefficients;
        let slopes = [c[1] / s.std[0], c[2] / s.std[1], c[3] / s.std[2]];
        let intercept = c[0] - (0..3).map(|f| slopes[f] * s.mean[f]).sum::<f64>();
        Some((intercept, slopes))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model format version {}", m.format_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Malformed {
            what: "model",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Seeded shuffle split of aggregated points into train and test sets.
pub fn split(points: &[AggregatedPoint], train_fraction: f64, seed: u64) -> Result<(Vec<AggregatedPoint>, Vec<AggregatedPoint>)> {
    if points.len() < MIN_SPLIT_POINTS {
        return Err(Error::DatasetTooSmall {
            got: points.len(),
            need: MIN_SPLIT_POINTS,
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} must lie in (0, 1)")));
    }
    let n = points.len();
    let n_train = ((train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Split, 0));
    let train = idx[..n_train].iter().map(|&i| points[i]).collect();
    let test = idx[n_train..].iter().map(|&i| points[i]).collect();
    Ok((train, test))
}

pub fn rmse(predictions: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    let mse = predictions.iter().zip(labels).map(|(p, l)| (p - l).powi(2)).sum::<f64>() / labels.len() as f64;
    mse.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub kpi: Kpi,
    pub model: ModelKind,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by KPI, then ascending RMSE.
    pub entries: Vec<EvalEntry>,
    pub n_train: usize,
    pub n_test: usize,
    pub split_seed: u64,
}

impl EvalReport {
    pub fn rmse_of(&self, kpi: Kpi, model: ModelKind) -> Option<f64> {
        self.entries.iter().find(|e| e.kpi == kpi && e.model == model).map(|e| e.rmse)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kpi,model,rmse,n_train,n_test,split_seed\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{},{},{}", e.kpi, e.model, e.rmse, self.n_train, self.n_test, self.split_seed);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "Test RMSE ({} train / {} test points, split seed {})\n{:<10} {:<14} {:>12}\n",
            self.n_train, self.n_test, self.split_seed, "kpi", "model", "rmse"
        );
        for e in &self.entries {
            let unit = match e.kpi {
                Kpi::MeanRsrp => "dB",
                Kpi::Hosr => "%",
            };
            let _ = writeln!(s, "{:<10} {:<14} {:>9.4} {unit}", e.kpi.as_str(), e.model.as_str(), e.rmse);
        }
        s
    }
}

/// Test RMSE of every model against the KPI it predicts.
pub fn evaluate(models: &[TrainedModel], test: &[AggregatedPoint], n_train: usize, split_seed: u64) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut entries: Vec<EvalEntry> = models
        .iter()
        .map(|m| {
            let preds: Vec<f64> = test.iter().map(|p| m.predict(&p.cop)).collect();
            let labels: Vec<f64> = test.iter().map(|p| m.spec.target.of(p)).collect();
            EvalEntry {
                kpi: m.spec.target,
                model: m.spec.kind,
                rmse: rmse(&preds, &labels),
            }
        })
        .collect();
    entries.sort_by(|a, b| a.kpi.cmp(&b.kpi).then(a.rmse.total_cmp(&b.rmse)).then(a.model.cmp(&b.model)));
    Ok(EvalReport {
        entries,
        n_train,
        n_test: test.len(),
        split_seed,
    })
}
