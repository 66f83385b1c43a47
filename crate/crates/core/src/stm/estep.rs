//! Per-document variational update: Laplace approximation at the mode of the
//! logistic-normal posterior over the topic log-odds.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{nearest_spd, softmax_with_reference, symmetrize};
use crate::optim::{self, BfgsOptions};

/// Word ids, counts and the matching columns of the topic-word matrix for one document.
pub(crate) struct DocWords {
    pub counts: Vec<f64>,
    /// Row-major `n_words x K` slice of beta columns for this document's words.
    pub beta_cols: Vec<f64>,
    pub total: f64,
}

impl DocWords {
    pub fn new(row: &[(u32, u32)], beta: &DMatrix<f64>) -> Self {
        let k = beta.nrows();
        let mut beta_cols = Vec::with_capacity(row.len() * k);
        for &(w, _) in row {
            for t in 0..k {
                beta_cols.push(beta[(t, w as usize)]);
            }
        }
        let counts: Vec<f64> = row.iter().map(|&(_, c)| c as f64).collect();
        let total = counts.iter().sum();
        DocWords {
            counts,
            beta_cols,
            total,
        }
    }

    fn n_words(&self) -> usize {
        self.counts.len()
    }
}

/// Prior of one document: mean and precision (inverse covariance) of the log-odds.
pub(crate) struct Prior<'a> {
    pub mu: &'a [f64],
    pub sigma_inv: &'a DMatrix<f64>,
    pub sigma_logdet: f64,
}

/// log p(words | eta, beta) up to the multinomial coefficient, with its gradient in the
/// first K-1 coordinates.
pub(crate) fn log_likelihood(doc: &DocWords, eta: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let theta = softmax_with_reference(eta);
    let k = theta.len();
    let mut lik = 0.0;
    let mut acc = vec![0.0; k];
    for j in 0..doc.n_words() {
        let b = &doc.beta_cols[j * k..(j + 1) * k];
        let t: f64 = theta.iter().zip(b).map(|(a, c)| a * c).sum();
        lik += doc.counts[j] * t.ln();
        let w = doc.counts[j] / t;
        for i in 0..k {
            acc[i] += w * b[i];
        }
    }
    if let Some(g) = grad {
        for i in 0..k - 1 {
            g[i] = theta[i] * acc[i] - doc.total * theta[i];
        }
    }
    lik
}

/// Hessian of the log-likelihood with respect to the K-1 free log-odds:
/// sum_j c_j (diag(p_j) - p_j p_j') - N (diag(theta) - theta theta'), where p_j is the
/// posterior topic distribution of word j, restricted to the free coordinates.
pub(crate) fn log_likelihood_hessian(doc: &DocWords, eta: &[f64]) -> DMatrix<f64> {
    let theta = softmax_with_reference(eta);
    let k = theta.len();
    let m = k - 1;
    let nw = doc.n_words();
    // columns sqrt(c_j) p_j, so that P P' = sum_j c_j p_j p_j'
    let mut p = DMatrix::zeros(m, nw);
    let mut diag = vec![0.0; m];
    for j in 0..nw {
        let b = &doc.beta_cols[j * k..(j + 1) * k];
        let t: f64 = theta.iter().zip(b).map(|(a, c)| a * c).sum();
        let c = doc.counts[j];
        let sc = c.sqrt();
        for i in 0..m {
            let pi = theta[i] * b[i] / t;
            diag[i] += c * pi;
            p[(i, j)] = sc * pi;
        }
    }
    let th = DVector::from_column_slice(&theta[..m]);
    let n = doc.total;
    let mut h = &th * th.transpose() * n - &p * p.transpose();
    for i in 0..m {
        h[(i, i)] += diag[i] - n * theta[i];
    }
    symmetrize(&mut h);
    h
}

/// Negative of the per-document objective: 0.5 (eta-mu)' S^-1 (eta-mu) - log p(w | eta).
pub(crate) fn objective(doc: &DocWords, prior: &Prior, eta: &[f64], grad: &mut [f64]) -> f64 {
    let lik = log_likelihood(doc, eta, Some(grad));
    let m = eta.len();
    let r: Vec<f64> = eta.iter().zip(prior.mu).map(|(e, u)| e - u).collect();
    let mut quad = 0.0;
    for i in 0..m {
        let sr: f64 = prior.sigma_inv.column(i).iter().zip(&r).map(|(a, b)| a * b).sum();
        quad += r[i] * sr;
        grad[i] = sr - grad[i];
    }
    0.5 * quad - lik
}

/// Per-document E-step objective, 0.5 (eta-mu)' S^-1 (eta-mu) - log p(words | eta), and
/// its analytic gradient in the K-1 free log-odds. `row` holds (word, count) pairs.
pub fn estep_objective(
    row: &[(u32, u32)],
    beta: &DMatrix<f64>,
    mu: &[f64],
    sigma_inv: &DMatrix<f64>,
    eta: &[f64],
) -> (f64, Vec<f64>) {
    let doc = DocWords::new(row, beta);
    let prior = Prior {
        mu,
        sigma_inv,
        sigma_logdet: 0.0,
    };
    let mut grad = vec![0.0; eta.len()];
    let f = objective(&doc, &prior, eta, &mut grad);
    (f, grad)
}

pub(crate) struct DocFit {
    pub eta: Vec<f64>,
    pub nu: DMatrix<f64>,
    /// Contribution of this document to the evidence bound.
    pub bound: f64,
    pub grad_norm: f64,
}

/// Finds the mode of the per-document objective starting from `start` and forms the
/// Laplace covariance.
pub(crate) fn fit_document(doc: &DocWords, prior: &Prior, start: &[f64]) -> DocFit {
    let m = start.len();
    let gmax = |g: &[f64]| g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let solve = |x0: DVector<f64>, tol: f64| {
        let f = |x: &DVector<f64>, g: &mut DVector<f64>| objective(doc, prior, x.as_slice(), g.as_mut_slice());
        optim::minimize(
            f,
            x0,
            BfgsOptions {
                max_iter: 1000,
                grad_tol: tol,
            },
        )
        .x
    };
    // a rough quasi-Newton solve, finished by Newton steps
    let mut eta = if m == 0 {
        DVector::zeros(0)
    } else {
        solve(DVector::from_column_slice(start), 1e-4)
    };
    let mut grad = vec![0.0; m];
    let mut value = objective(doc, prior, eta.as_slice(), &mut grad);
    let mut hl = log_likelihood_hessian(doc, eta.as_slice());
    let mut neg_hess = prior.sigma_inv - &hl;
    for _ in 0..20 {
        if gmax(&grad) < 1e-10 {
            break;
        }
        let Some(chol) = neg_hess.clone().cholesky() else {
            break;
        };
        let trial = &eta - chol.solve(&DVector::from_column_slice(&grad));
        let mut tg = vec![0.0; m];
        let tv = objective(doc, prior, trial.as_slice(), &mut tg);
        if tv.is_finite() && tv <= value + 1e-12 * value.abs().max(1.0) {
            eta = trial;
            value = tv;
            grad = tg;
            hl = log_likelihood_hessian(doc, eta.as_slice());
            neg_hess = prior.sigma_inv - &hl;
        } else {
            break;
        }
    }
    if m > 0 && gmax(&grad) > 1e-7 {
        // Newton stalled on indefinite curvature
        let x = solve(eta.clone(), 1e-7);
        let mut g = vec![0.0; m];
        let v = objective(doc, prior, x.as_slice(), &mut g);
        if v <= value {
            eta = x;
            grad = g;
            hl = log_likelihood_hessian(doc, eta.as_slice());
            neg_hess = prior.sigma_inv - &hl;
        }
    }

    let precision = match neg_hess.clone().cholesky() {
        Some(_) => neg_hess,
        None => nearest_spd(&neg_hess, 1e-10),
    };
    let chol = precision
        .clone()
        .cholesky()
        .expect("precision repaired to SPD");
    let nu = chol.inverse();
    let logdet_nu = -crate::linalg::chol_logdet(&chol);
    let bound = document_bound(doc, prior, eta.as_slice(), &hl, &nu, logdet_nu);
    let grad_norm = gmax(&grad);
    DocFit {
        eta: eta.as_slice().to_vec(),
        nu,
        bound,
        grad_norm,
    }
}

/// E_q[log p(w, eta)] + H[q] under q = N(eta, nu), with the likelihood expanded to second
/// order around eta. Constants independent of all parameters are dropped.
pub(crate) fn document_bound(
    doc: &DocWords,
    prior: &Prior,
    eta: &[f64],
    hl: &DMatrix<f64>,
    nu: &DMatrix<f64>,
    logdet_nu: f64,
) -> f64 {
    let m = eta.len();
    let lik = log_likelihood(doc, eta, None);
    let r = DVector::from_iterator(m, eta.iter().zip(prior.mu).map(|(e, u)| e - u));
    let quad = r.dot(&(prior.sigma_inv * &r));
    let tr_h: f64 = hl.component_mul(nu).sum();
    let tr_s: f64 = prior.sigma_inv.component_mul(nu).sum();
    lik + 0.5 * tr_h - 0.5 * prior.sigma_logdet - 0.5 * quad - 0.5 * tr_s
        + 0.5 * logdet_nu
        + 0.5 * m as f64
}
