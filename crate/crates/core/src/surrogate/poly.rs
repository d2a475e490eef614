//! Polynomial least squares on standardised features.

use serde::{Deserialize, Serialize};

use super::linalg::cholesky_solve;
use crate::error::Result;

/// Exponent triples of every monomial of total degree <= `degree`, ordered
/// by total degree and then lexicographically (descending on the first input).
pub fn monomials(degree: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a in (0..=total).rev() {
            for b in (0..=total - a).rev() {
                out.push([a, b, total - a - b]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyModel {
    pub degree: u32,
    pub exponents: Vec<[u32; 3]>,
    pub coefficients: Vec<f64>,
}

fn basis(exponents: &[[u32; 3]], x: &[f64; 3], out: &mut [f64]) {
    for (o, e) in out.iter_mut().zip(exponents) {
        *o = x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32);
    }
}

impl PolyModel {
    /// Ridge-regularised least squares; the intercept is not penalised.
    pub fn fit(degree: u32, x: &[[f64; 3]], y: &[f64], ridge: f64) -> Result<Self> {
        let exponents = monomials(degree);
        let p = exponents.len();
        let mut gram = vec![0.0; p * p];
        let mut rhs = vec![0.0; p];
        let mut phi = vec![0.0; p];
        for (xi, &yi) in x.iter().zip(y) {
            basis(&exponents, xi, &mut phi);
            for i in 0..p {
                rhs[i] += phi[i] * yi;
                for j in 0..=i {
                    gram[i * p + j] += phi[i] * phi[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                gram[j * p + i] = gram[i * p + j];
            }
        }
        let trace: f64 = (0..p).map(|i| gram[i * p + i]).sum();
        let lambda = ridge * (trace / p as f64).max(1.0);
        for i in 1..p {
            gram[i * p + i] += lambda;
        }
        let coefficients = cholesky_solve(&gram, &rhs)?;
        Ok(Self {
            degree,
            exponents,
            coefficients,
        })
    }

    pub fn predict(&self, x: &[f64; 3]) -> f64 {
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| c * x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32))
            .sum()
    }

    /// Copy keeping only the terms of total degree <= `degree`.
    pub fn truncated(&self, degree: u32) -> Self {
        let keep: Vec<usize> = (0..self.exponents.len())
            .filter(|&i| self.exponents[i].iter().sum::<u32>() <= degree)
            .collect();
        Self {
            degree,
            exponents: keep.iter().map(|&i| self.exponents[i]).collect(),
            coefficients: keep.iter().map(|&i| self.coefficients[i]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(1), vec![[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        assert_eq!(monomials(4).len(), 35);
    }

    #[test]
    fn zeroing_higher_terms_gives_linear_prediction() {
        let x: Vec<[f64; 3]> = (0..40).map(|i| [(i % 5) as f64 - 2.0, (i % 7) as f64 * 0.3, (i % 3) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|v| (v[0] * v[1]).sin() + v[2] * v[2]).collect();
        let mut quartic = PolyModel::fit(4, &x, &y, 1e-8).unwrap();
        for (e, c) in quartic.exponents.iter().zip(quartic.coefficients.iter_mut()) {
            if e.iter().sum::<u32>() > 1 {
                *c = 0.0;
            }
        }
        let linear = PolyModel {
            degree: 1,
            exponents: monomials(1),
            coefficients: quartic.truncated(1).coefficients,
        };
        for v in &x {
            assert!((quartic.predict(v) - linear.predict(v)).abs() < 1e-12);
        }
    }
}
