//! Small dense linear-algebra helpers shared by the models.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// log|M| from a Cholesky factor.
pub fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Clamps eigenvalues from below at `floor * max(1, largest)`.
pub fn nearest_spd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().cloned().fold(1.0f64, f64::max);
    let lo = floor * top;
    let vals = eig.eigenvalues.map(|v| v.max(lo));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Softmax of `[eta, 0]`: the K-vector of topic proportions for a (K-1)-vector of log-odds.
pub fn softmax_with_reference(eta: &[f64]) -> Vec<f64> {
    let max = eta.iter().cloned().fold(0.0f64, f64::max);
    let mut out: Vec<f64> = eta.iter().map(|e| (e - max).exp()).collect();
    out.push((-max).exp());
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Ordinary least squares with an optional ridge term on all but the first `unpenalized`
/// coefficients. Returns coefficients and the inverse of the (penalized) normal matrix.
pub fn least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
    unpenalized: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut xtx = x.transpose() * x;
    for j in unpenalized..xtx.nrows() {
        xtx[(j, j)] += ridge;
    }
    let scale = xtx.diagonal().amax().max(1.0);
    if min_eigenvalue(&xtx) <= 1e-10 * scale {
        return Err(Error::RankDeficient(format!(
            "{} columns, normal matrix is singular",
            x.ncols()
        )));
    }
    let chol = cholesky(&xtx, "normal equations")?;
    let coef = chol.solve(&(x.transpose() * y));
    Ok((coef, chol.inverse()))
}
