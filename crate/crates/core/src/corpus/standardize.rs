use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Dtm;
use crate::error::{Error, Result};

/// Column moments used to standardize a matrix; kept so test rows can be transformed
/// with the training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub stds: Vec<f64>,
    /// Columns with zero variance; they are mapped to 0.
    pub zero_variance: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub matrix: DMatrix<f64>,
    pub standardization: Standardization,
}

pub fn standardize(m: &DMatrix<f64>) -> Standardized {
    let n = m.nrows() as f64;
    let mut means = Vec::with_capacity(m.ncols());
    let mut stds = Vec::with_capacity(m.ncols());
    let mut zero_variance = Vec::new();
    for (j, col) in m.column_iter().enumerate() {
        let mean = if n > 0.0 { col.sum() / n } else { 0.0 };
        let var = if n > 0.0 {
            col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
        } else {
            0.0
        };
        let sd = var.sqrt();
        // relative threshold so already-standardized columns are not misflagged
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            zero_variance.push(j);
        }
        means.push(mean);
        stds.push(sd);
    }
    let standardization = Standardization {
        means,
        stds,
        zero_variance,
    };
    let matrix = standardization.apply_dense(m);
    Standardized {
        matrix,
        standardization,
    }
}

pub fn standardize_dtm(dtm: &Dtm) -> Standardized {
    standardize(&dtm.to_dense())
}

impl Standardization {
    pub fn n_cols(&self) -> usize {
        self.means.len()
    }

    fn apply_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        let zero: std::collections::HashSet<usize> = self.zero_variance.iter().copied().collect();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            if zero.contains(&j) {
                col.fill(0.0);
            } else {
                let (mu, sd) = (self.means[j], self.stds[j]);
                col.apply(|x| *x = (*x - mu) / sd);
            }
        }
        out
    }

    /// Transforms new rows with the stored moments.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.ncols() != self.n_cols() {
            return Err(Error::Misaligned {
                expected: self.n_cols(),
                found: m.ncols(),
            });
        }
        Ok(self.apply_dense(m))
    }

    pub fn apply_dtm(&self, dtm: &Dtm) -> Result<DMatrix<f64>> {
        self.apply(&dtm.to_dense())
    }
}
