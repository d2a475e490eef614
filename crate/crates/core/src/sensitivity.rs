//! Variance-based (Sobol) sensitivity indices estimated with Saltelli sampling.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::handover::{THRESHOLD_MAX_DBM, THRESHOLD_MIN_DBM, TTT_VALUES_MS};
use crate::rng::{stream_rng, Stream};
use crate::surrogate::{Kpi, TrainedModel};

pub const SOBOL_CSV_HEADER: &str = "kpi,input,first_order,first_order_se,total_order,total_order_se";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Continuous { lo: f64, hi: f64 },
    /// Unit interval split into equal-width bins, one per value.
    Discrete { values: Vec<f64> },
}

impl Domain {
    /// Maps u in [0, 1) onto the domain.
    pub fn map(&self, u: f64) -> f64 {
        match self {
            Domain::Continuous { lo, hi } => lo + u * (hi - lo),
            Domain::Discrete { values } => {
                let k = values.len();
                values[((u * k as f64) as usize).min(k - 1)]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Domain::Continuous { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Domain::Discrete { values } => !values.is_empty() && values.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("sobol: invalid input domain {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolConfig {
    pub n_base: usize,
    pub inputs: Vec<Input>,
    pub seed: u64,
}

impl Default for SobolConfig {
    fn default() -> Self {
        Self::cop_box(4096, 0)
    }
}

impl SobolConfig {
    /// The standard A5 parameter box: discrete TTT, continuous thresholds.
    pub fn cop_box(n_base: usize, seed: u64) -> Self {
        let th = Domain::Continuous {
            lo: f64::from(THRESHOLD_MIN_DBM),
            hi: f64::from(THRESHOLD_MAX_DBM),
        };
        Self {
            n_base,
            inputs: vec![
                Input {
                    name: "ttt".into(),
                    domain: Domain::Discrete {
                        values: TTT_VALUES_MS.iter().map(|&t| f64::from(t)).collect(),
                    },
                },
                Input {
                    name: "th1".into(),
                    domain: th.clone(),
                },
                Input {
                    name: "th2".into(),
                    domain: th,
                },
            ],
            seed,
        }
    }

    pub fn dims(&self) -> usize {
        self.inputs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_base < 64 || !self.n_base.is_power_of_two() {
            return Err(Error::Config(format!(
                "sobol: n_base must be a power of two and at least 64, got {}",
                self.n_base
            )));
        }
        if self.inputs.is_empty() {
            return Err(Error::Config("sobol: no inputs".into()));
        }
        self.inputs.iter().try_for_each(|i| i.domain.validate())
    }
}

/// The A, B and A_B^(i) sample blocks, already mapped onto the input domains.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliSample {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// `ab[i]` is A with column i taken from B.
    pub ab: Vec<Vec<Vec<f64>>>,
}

impl SaltelliSample {
    /// All evaluation points: A, then B, then each A_B^(i) in input order.
    pub fn rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.a.iter().chain(&self.b).chain(self.ab.iter().flatten())
    }

    pub fn len(&self) -> usize {
        self.a.len() * (self.ab.len() + 2)
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Draws the Saltelli blocks. Only the domains are checked here, so small
/// `n_base` values are accepted for inspection.
pub fn saltelli_matrices(cfg: &SobolConfig) -> Result<SaltelliSample> {
    cfg.inputs.iter().try_for_each(|i| i.domain.validate())?;
    let d = cfg.dims();
    let mut rng = stream_rng(cfg.seed, Stream::Sobol, 0);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        cfg.inputs.iter().map(|i| i.domain.map(rng.gen::<f64>())).collect()
    };
    let mut a = Vec::with_capacity(cfg.n_base);
    let mut b = Vec::with_capacity(cfg.n_base);
    for _ in 0..cfg.n_base {
        a.push(draw(&mut rng));
        b.push(draw(&mut rng));
    }
    let ab = (0..d)
        .map(|i| {
            a.iter()
                .zip(&b)
                .map(|(ra, rb)| {
                    let mut r = ra.clone();
                    r[i] = rb[i];
                    r
                })
                .collect()
        })
        .collect();
    Ok(SaltelliSample { a, b, ab })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolIndex {
    pub first_order: f64,
    pub first_order_se: f64,
    pub total_order: f64,
    pub total_order_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub names: Vec<String>,
    pub indices: Vec<SobolIndex>,
    pub variance: f64,
    /// Set when the output is constant; every index is then 0.
    pub zero_variance: bool,
}

impl SobolIndices {
    pub fn get(&self, name: &str) -> Option<&SobolIndex> {
        self.names.iter().position(|n| n == name).map(|i| &self.indices[i])
    }

    /// Name of the input with the largest first-order index.
    pub fn dominant_first_order(&self) -> Option<&str> {
        let mut best: Option<usize> = None;
        for (i, s) in self.indices.iter().enumerate() {
            if best.map_or(true, |b| s.first_order > self.indices[b].first_order) {
                best = Some(i);
            }
        }
        best.map(|i| self.names[i].as_str())
    }
}

fn mean_and_se(terms: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = terms.clone().sum::<f64>() / nf;
    let var = terms.map(|t| (t - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
    (mean, (var / nf).sqrt())
}

/// First-order and total-order indices of `f` from Jansen's difference
/// estimators, with the output variance estimated as half the mean squared
/// A/B difference. Only differences of outputs enter, so the indices are
/// unchanged by affine rescaling of `f` on the same sample.
pub fn sobol_indices<F>(f: F, cfg: &SobolConfig) -> Result<SobolIndices>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let sample = saltelli_matrices(cfg)?;
    let rows: Vec<&Vec<f64>> = sample.rows().collect();
    let y: Vec<f64> = rows.par_iter().map(|r| f(r)).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("sobol: function returned a non-finite value".into()));
    }
    let n = cfg.n_base;
    let d = cfg.dims();
    let centre = y[..2 * n].iter().sum::<f64>() / (2 * n) as f64;
    let y: Vec<f64> = y.iter().map(|v| v - centre).collect();
    let (fa, rest) = y.split_at(n);
    let (fb, fab) = rest.split_at(n);
    let variance = fa.iter().zip(fb).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2 * n) as f64;
    let names = cfg.inputs.iter().map(|i| i.name.clone()).collect();
    let scale = fa.iter().chain(fb).fold(0.0f64, |m, v| m.max(v.abs())).max(centre.abs());
    if variance <= (1e-12 * scale).powi(2) || variance == 0.0 {
        let zero = SobolIndex {
            first_order: 0.0,
            first_order_se: 0.0,
            total_order: 0.0,
            total_order_se: 0.0,
        };
        return Ok(SobolIndices {
            names,
            indices: vec![zero; d],
            variance,
            zero_variance: true,
        });
    }
    let indices = (0..d)
        .map(|i| {
            let fi = &fab[i * n..(i + 1) * n];
            let first = (0..n).map(|j| 0.5 * (fa[j] - fb[j]).powi(2) - 0.5 * (fb[j] - fi[j]).powi(2));
            let total = (0..n).map(|j| 0.5 * (fa[j] - fi[j]).powi(2));
            let (s1, s1_se) = mean_and_se(first, n);
            let (st, st_se) = mean_and_se(total, n);
            SobolIndex {
                first_order: s1 / variance,
                first_order_se: s1_se / variance,
                total_order: st / variance,
                total_order_se: st_se / variance,
            }
        })
        .collect();
    Ok(SobolIndices {
        names,
        indices,
        variance,
        zero_variance: false,
    })
}

/// Indices of a trained surrogate over the A5 box described by `cfg`
/// (inputs in ttt, th1, th2 order).
pub fn model_sensitivity(model: &TrainedModel, cfg: &SobolConfig) -> Result<SobolIndices> {
    if cfg.dims() != 3 {
        return Err(Error::Config("sobol: surrogate inputs must be ttt, th1, th2".into()));
    }
    sobol_indices(|r| model.predict_features(&[r[0], r[1], r[2]]), cfg)
}

pub fn sobol_csv(results: &[(Kpi, SobolIndices)]) -> String {
    let mut s = format!("{SOBOL_CSV_HEADER}\n");
    for (kpi, res) in results {
        for (name, ix) in res.names.iter().zip(&res.indices) {
            let _ = writeln!(
                s,
                "{kpi},{name},{},{},{},{}",
                ix.first_order, ix.first_order_se, ix.total_order, ix.total_order_se
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cube(n_base: usize, lo: f64, hi: f64, seed: u64) -> SobolConfig {
        SobolConfig {
            n_base,
            inputs: ["x1", "x2", "x3"]
                .iter()
                .map(|n| Input {
                    name: n.to_string(),
                    domain: Domain::Continuous { lo, hi },
                })
                .collect(),
            seed,
        }
    }

    #[test]
    fn sample_shape_and_bounds() {
        let cfg = SobolConfig::cop_box(4, 1);
        let s = saltelli_matrices(&cfg).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.rows().count(), 20);
        for r in s.rows() {
            assert!(TTT_VALUES_MS.iter().any(|&t| f64::from(t) == r[0]));
            assert!((-120.0..=-90.0).contains(&r[1]) && (-120.0..=-90.0).contains(&r[2]));
        }
        for (i, block) in s.ab.iter().enumerate() {
            for j in 0..4 {
                for k in 0..3 {
                    let want = if k == i { s.b[j][k] } else { s.a[j][k] };
                    assert_eq!(block[j][k], want);
                }
            }
        }
        assert_eq!(s, saltelli_matrices(&cfg).unwrap());
    }

    #[test]
    fn binning_covers_every_value_equally() {
        let d = Domain::Discrete {
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        };
        assert_eq!(d.map(0.0), 1.0);
        assert_eq!(d.map(0.1999), 1.0);
        assert_eq!(d.map(0.2), 2.0);
        assert_eq!(d.map(0.9999), 5.0);
    }

    #[test]
    fn rejects_bad_n_base() {
        assert!(sobol_indices(|_| 0.0, &cube(100, 0.0, 1.0, 0)).is_err());
        assert!(sobol_indices(|_| 0.0, &cube(32, 0.0, 1.0, 0)).is_err());
    }

    #[test]
    fn constant_function_is_flagged() {
        let r = sobol_indices(|_| 3.5, &cube(64, 0.0, 1.0, 0)).unwrap();
        assert!(r.zero_variance);
        assert!(r.indices.iter().all(|i| i.first_order == 0.0 && i.total_order == 0.0));
    }

    #[test]
    fn single_input_function() {
        let r = sobol_indices(|x| x[0], &cube(4096, 0.0, 1.0, 2)).unwrap();
        assert!((r.indices[0].first_order - 1.0).abs() < 0.02);
        assert!(r.indices[1].first_order.abs() < 0.02);
        assert!(r.indices[2].first_order.abs() < 0.02);
        assert_eq!(r.dominant_first_order(), Some("x1"));
    }

    fn ishigami(x: &[f64]) -> f64 {
        x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
    }

    /// Closed-form Ishigami partial variances.
    fn ishigami_first_order(a: f64, b: f64) -> [f64; 3] {
        let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = b * b * PI.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
        let v = v1 + v2 + v13;
        [v1 / v, v2 / v, 0.0]
    }

    #[test]
    fn ishigami_matches_analytic_values() {
        let want = ishigami_first_order(7.0, 0.1);
        let r = sobol_indices(ishigami, &cube(4096, -PI, PI, 5)).unwrap();
        for i in 0..3 {
            assert!((r.indices[i].first_order - want[i]).abs() < 0.05, "{i}: {:?}", r.indices[i]);
        }
    }

    #[test]
    fn additive_function_has_equal_first_and_total() {
        let f = |x: &[f64]| 2.0 * x[0] + x[1].powi(2) - 0.5 * x[2];
        let r = sobol_indices(f, &cube(1024, -1.0, 1.0, 9)).unwrap();
        for ix in &r.indices {
            let se = (ix.first_order_se.powi(2) + ix.total_order_se.powi(2)).sqrt();
            assert!((ix.total_order - ix.first_order).abs() <= 3.0 * se, "{ix:?}");
        }
    }

    #[test]
    fn affine_rescaling_leaves_indices_unchanged() {
        let cfg = cube(256, -PI, PI, 4);
        let r = sobol_indices(ishigami, &cfg).unwrap();
        let s = sobol_indices(|x| -3.0 * ishigami(x) + 100.0, &cfg).unwrap();
        for (a, b) in r.indices.iter().zip(&s.indices) {
            assert!((a.first_order - b.first_order).abs() < 1e-9);
            assert!((a.total_order - b.total_order).abs() < 1e-9);
        }
    }

    #[test]
    fn doubling_n_base_stays_within_error() {
        let a = sobol_indices(ishigami, &cube(2048, -PI, PI, 21)).unwrap();
        let b = sobol_indices(ishigami, &cube(4096, -PI, PI, 21)).unwrap();
        for (x, y) in a.indices.iter().zip(&b.indices) {
            let se = (x.first_order_se.powi(2) + y.first_order_se.powi(2)).sqrt();
            assert!((x.first_order - y.first_order).abs() <= 3.0 * se);
            let se = (x.total_order_se.powi(2) + y.total_order_se.powi(2)).sqrt();
            assert!((x.total_order - y.total_order).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn csv_layout() {
        let r = sobol_indices(|x| x[0], &cube(64, 0.0, 1.0, 0)).unwrap();
        let csv = sobol_csv(&[(Kpi::Hosr, r)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SOBOL_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("hosr,x1,"));
    }
}
