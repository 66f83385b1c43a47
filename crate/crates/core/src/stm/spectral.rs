//! Deterministic topic initialization by anchor-word recovery on the word
//! co-occurrence matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::corpus::Dtm;
use crate::error::{Error, Result};
use crate::linalg::project_simplex;

/// Normalized word co-occurrence matrix: sum over documents of (h h' - diag h) / (n (n-1)),
/// scaled to sum to one. Documents with fewer than two tokens carry no co-occurrence.
pub fn cooccurrence(dtm: &Dtm) -> DMatrix<f64> {
    let v = dtm.n_cols();
    let mut q = DMatrix::zeros(v, v);
    for row in dtm.rows() {
        let n: f64 = row.iter().map(|&(_, c)| c as f64).sum();
        if n < 2.0 {
            continue;
        }
        let norm = n * (n - 1.0);
        for &(i, ci) in row {
            let ci = ci as f64;
            for &(j, cj) in row {
                let cj = cj as f64;
                let val = if i == j { ci * ci - ci } else { ci * cj };
                q[(i as usize, j as usize)] += val / norm;
            }
        }
    }
    let total = q.sum();
    if total > 0.0 {
        q /= total;
    }
    q
}

/// Greedy farthest-point anchor selection with Gram-Schmidt deflation. Ties go to the
/// lowest word index.
pub fn select_anchors(qbar: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    let mut resid = qbar.clone();
    let v = resid.nrows();
    let mut norms: Vec<f64> = (0..v).map(|i| resid.row(i).norm_squared()).collect();
    let first_max = norms.iter().cloned().fold(0.0f64, f64::max);
    let mut anchors = Vec::with_capacity(k);
    for found in 0..k {
        let (best, best_norm) = norms
            .iter()
            .enumerate()
            .filter(|(i, _)| !anchors.contains(i))
            .fold((usize::MAX, -1.0f64), |acc, (i, &n)| if n > acc.1 { (i, n) } else { acc });
        if best == usize::MAX || best_norm <= 1e-12 * first_max {
            return Err(Error::TooFewAnchors {
                requested: k,
                found,
            });
        }
        anchors.push(best);
        let basis: DVector<f64> = resid.row(best).transpose() / best_norm.sqrt();
        let proj = &resid * &basis;
        resid -= &proj * basis.transpose();
        for (i, n) in norms.iter_mut().enumerate() {
            *n = resid.row(i).norm_squared();
        }
    }
    Ok(anchors)
}

/// min_c 0.5 c'Gc - b'c over the simplex, by accelerated projected gradient.
fn simplex_least_squares(g: &DMatrix<f64>, b: &DVector<f64>, lipschitz: f64) -> Vec<f64> {
    let k = b.len();
    let mut c = vec![1.0 / k as f64; k];
    let mut y = c.clone();
    let mut t = 1.0f64;
    let step = 1.0 / lipschitz;
    for _ in 0..5000 {
        let yv = DVector::from_column_slice(&y);
        let grad = g * &yv - b;
        let mut next: Vec<f64> = (0..k).map(|i| y[i] - step * grad[i]).collect();
        project_simplex(&mut next);
        let delta = next
            .iter()
            .zip(&c)
            .fold(0.0f64, |a, (x, z)| a.max((x - z).abs()));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        y = (0..k).map(|i| next[i] + mom * (next[i] - c[i])).collect();
        c = next;
        t = t_next;
        if delta < 1e-13 {
            break;
        }
    }
    c
}

/// Recovers a K x V row-stochastic topic-word matrix from the training counts.
pub fn spectral_init(dtm: &Dtm, k: usize) -> Result<DMatrix<f64>> {
    let v = dtm.n_cols();
    if k < 2 {
        return Err(Error::invalid("K must be at least 2"));
    }
    if k > v {
        return Err(Error::invalid(format!("K = {k} exceeds vocabulary size {v}")));
    }
    let q = cooccurrence(dtm);
    let p: Vec<f64> = (0..v).map(|i| q.row(i).sum()).collect();
    if let Some(w) = p.iter().position(|&x| x <= 0.0) {
        return Err(Error::invalid(format!(
            "term {w} never co-occurs in the training documents; prune it before initializing"
        )));
    }
    let mut qbar = q;
    for (i, mut row) in qbar.row_iter_mut().enumerate() {
        row /= p[i];
    }
    let anchors = select_anchors(&qbar, k)?;
    let x = qbar.select_rows(&anchors);
    let gram = &x * x.transpose();
    let lipschitz = SymmetricEigen::new(gram.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let coef = &x * qbar.transpose();

    let mut a = DMatrix::zeros(k, v);
    for i in 0..v {
        let b = coef.column(i).into_owned();
        let c = simplex_least_squares(&gram, &b, lipschitz);
        for t in 0..k {
            a[(t, i)] = p[i] * c[t];
        }
    }
    for (t, mut row) in a.row_iter_mut().enumerate() {
        let s = row.sum();
        if s <= 0.0 {
            return Err(Error::TooFewAnchors {
                requested: k,
                found: t,
            });
        }
        row /= s;
    }
    Ok(a)
}

/// Spectral initialization that tolerates terms absent from `dtm`: it is run on the
/// observed columns only and absent terms get zero mass.
pub fn spectral_init_observed(dtm: &Dtm, k: usize) -> Result<DMatrix<f64>> {
    let mut seen = vec![false; dtm.n_cols()];
    for row in dtm.rows() {
        if row.iter().map(|&(_, c)| c).sum::<u32>() >= 2 {
            for &(w, _) in row {
                seen[w as usize] = true;
            }
        }
    }
    let kept: Vec<usize> = (0..dtm.n_cols()).filter(|&w| seen[w]).collect();
    if kept.len() == dtm.n_cols() {
        return spectral_init(dtm, k);
    }
    let mut remap = vec![u32::MAX; dtm.n_cols()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new as u32;
    }
    let rows = dtm
        .rows()
        .map(|r| {
            r.iter()
                .filter(|&&(w, _)| remap[w as usize] != u32::MAX)
                .map(|&(w, c)| (remap[w as usize], c))
                .collect()
        })
        .collect();
    let reduced = Dtm::from_rows(kept.len(), rows)?;
    let small = spectral_init(&reduced, k)?;
    let mut beta = DMatrix::zeros(k, dtm.n_cols());
    for (new, &old) in kept.iter().enumerate() {
        for t in 0..k {
            beta[(t, old)] = small[(t, new)];
        }
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_k_equals_v() {
        // every word is its own anchor
        let rows = vec![
            vec![(0, 2), (1, 1)],
            vec![(1, 2), (2, 1)],
            vec![(0, 1), (2, 3)],
            vec![(0, 1), (1, 1), (2, 1)],
        ];
        let dtm = Dtm::from_rows(3, rows).unwrap();
        let beta = spectral_init(&dtm, 3).unwrap();
        for t in 0..3 {
            let top = beta.row(t).iter().cloned().fold(0.0f64, f64::max);
            assert!(top > 0.99, "{beta}");
        }
    }

    #[test]
    fn too_many_topics_for_the_anchors() {
        // both words get the same conditional co-occurrence profile: one direction only
        let mut rows = vec![vec![(0, 2), (1, 2)]; 6];
        rows.push(vec![(0, 2)]);
        rows.push(vec![(1, 2)]);
        let dtm = Dtm::from_rows(2, rows).unwrap();
        assert!(matches!(spectral_init(&dtm, 2), Err(Error::TooFewAnchors { .. })));
    }

    #[test]
    fn k_larger_than_vocabulary() {
        let dtm = Dtm::from_rows(2, vec![vec![(0, 1), (1, 1)]]).unwrap();
        assert!(spectral_init(&dtm, 3).is_err());
    }
}
