use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::logistic::{dot, is_rank_deficient, solve_spd, weighted_gram};
use super::terms::DesignMatrix;
use crate::error::{Error, Result};

/// Ordinary least squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    /// Residual sum of squares over n - p.
    pub mse: f64,
    pub df: usize,
}

impl OlsFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        dot(row, &self.beta)
    }
}

pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<OlsFit> {
    if y.len() != x.rows {
        return Err(Error::Alignment {
            what: "outcome vector",
            expected: x.rows,
            found: y.len(),
        });
    }
    if x.rows <= x.cols || is_rank_deficient(x) {
        return Err(Error::RankDeficiency { columns: x.cols });
    }
    let gram = weighted_gram(x, |_| 1.0);
    let mut xty = DVector::zeros(x.cols);
    for (r, &yi) in x.iter_rows().zip(y) {
        for j in 0..x.cols {
            xty[j] += r[j] * yi;
        }
    }
    let beta: Vec<f64> = solve_spd(&gram, &xty)
        .ok_or(Error::RankDeficiency { columns: x.cols })?
        .iter()
        .copied()
        .collect();
    let sse: f64 = x
        .iter_rows()
        .zip(y)
        .map(|(r, &yi)| (yi - dot(r, &beta)).powi(2))
        .sum();
    let df = x.rows - x.cols;
    Ok(OlsFit {
        beta,
        mse: sse / df as f64,
        df,
    })
}
