//! Variational EM for the structural topic model.
//!
//! Each iteration runs the per-document Laplace E-step, then proposes new globals: topic
//! word distributions from the expected token-topic counts, prevalence coefficients by
//! ridge least squares of the modes on the design, and the covariance from the second
//! moments of the residuals plus the Laplace covariances. A proposal that lowers the
//! evidence bound is shortened towards the current globals until it does not; when no
//! shortened step helps, the fit stops.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use super::estep::{fit_document, DocWords, Prior};
use super::spectral::spectral_init_observed;
use super::{Design, InitKind, StmConfig, StmModel, MODEL_VERSION};
use crate::corpus::{Corpus, Dtm};
use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, cholesky, min_eigenvalue, symmetrize};

const MAX_HALVINGS: usize = 6;
const SPECTRAL_SMOOTHING: f64 = 1e-3;

/// Starting point other than the configured initializer.
#[derive(Debug, Clone)]
pub enum Start {
    Beta(DMatrix<f64>),
    /// Globals and, optionally, per-document modes from an earlier fit.
    Model {
        beta: DMatrix<f64>,
        gamma: DMatrix<f64>,
        sigma: DMatrix<f64>,
        eta: Option<DMatrix<f64>>,
    },
}

#[derive(Clone)]
struct Globals {
    beta: DMatrix<f64>,
    gamma: DMatrix<f64>,
    sigma: DMatrix<f64>,
}

impl Globals {
    fn mix(&self, other: &Globals, t: f64) -> Globals {
        Globals {
            beta: &self.beta * (1.0 - t) + &other.beta * t,
            gamma: &self.gamma * (1.0 - t) + &other.gamma * t,
            sigma: &self.sigma * (1.0 - t) + &other.sigma * t,
        }
    }
}

struct EStep {
    eta: DMatrix<f64>,
    nu: Vec<DMatrix<f64>>,
    doc_bound: f64,
    /// K x V expected token-topic counts.
    counts: DMatrix<f64>,
    max_grad: f64,
}

fn e_step(dtm: &Dtm, design: &Design, g: &Globals, start: &DMatrix<f64>) -> Result<EStep> {
    let m = g.sigma.nrows();
    let k = g.beta.nrows();
    let chol = cholesky(&g.sigma, "topic covariance")?;
    let sigma_inv = chol.inverse();
    let sigma_logdet = chol_logdet(&chol);
    let mu = &design.matrix * &g.gamma;

    let fits: Vec<_> = (0..dtm.n_rows())
        .into_par_iter()
        .map(|d| {
            let doc = DocWords::new(dtm.row(d), &g.beta);
            let mu_d: Vec<f64> = mu.row(d).iter().copied().collect();
            let prior = Prior {
                mu: &mu_d,
                sigma_inv: &sigma_inv,
                sigma_logdet,
            };
            let s: Vec<f64> = start.row(d).iter().copied().collect();
            fit_document(&doc, &prior, &s)
        })
        .collect();

    let mut eta = DMatrix::zeros(dtm.n_rows(), m);
    let mut counts = DMatrix::zeros(k, dtm.n_cols());
    let mut doc_bound = 0.0;
    let mut nu = Vec::with_capacity(fits.len());
    let mut max_grad = 0.0f64;
    for (d, fit) in fits.into_iter().enumerate() {
        let theta = crate::linalg::softmax_with_reference(&fit.eta);
        for &(w, c) in dtm.row(d) {
            let w = w as usize;
            let t: f64 = (0..k).map(|i| theta[i] * g.beta[(i, w)]).sum();
            for i in 0..k {
                counts[(i, w)] += c as f64 * theta[i] * g.beta[(i, w)] / t;
            }
        }
        for j in 0..m {
            eta[(d, j)] = fit.eta[j];
        }
        doc_bound += fit.bound;
        max_grad = max_grad.max(fit.grad_norm);
        nu.push(fit.nu);
    }
    Ok(EStep {
        eta,
        nu,
        doc_bound,
        counts,
        max_grad,
    })
}

fn ridge_penalty(gamma: &DMatrix<f64>, ridge: f64) -> f64 {
    // the intercept row is not penalized
    let mut s = 0.0;
    for p in 1..gamma.nrows() {
        s += gamma.row(p).norm_squared();
    }
    0.5 * ridge * s
}

/// Maximizes sum_d log N(eta_d; x_d gamma, Sigma) - ridge/2 |gamma_(-intercept)|^2 over gamma.
/// Stationarity gives X'X gamma + L gamma Sigma = X'H, solved in vectorized form.
fn update_gamma(design: &Design, eta: &DMatrix<f64>, sigma: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let x = &design.matrix;
    let p = x.ncols();
    let m = eta.ncols();
    let xtx = x.transpose() * x;
    let xth = x.transpose() * eta;
    let n = p * m;
    let mut a = DMatrix::zeros(n, n);
    for k in 0..m {
        for kk in 0..m {
            for i in 0..p {
                for j in 0..p {
                    let mut v = 0.0;
                    if k == kk {
                        v += xtx[(i, j)];
                    }
                    if i == j && i > 0 {
                        v += ridge * sigma[(k, kk)];
                    }
                    a[(i + p * k, j + p * kk)] = v;
                }
            }
        }
    }
    let b = DVector::from_iterator(n, (0..m).flat_map(|k| (0..p).map(move |i| (i, k))).map(|(i, k)| xth[(i, k)]));
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::RankDeficient("prevalence regression is singular".into()))?;
    Ok(DMatrix::from_fn(p, m, |i, k| sol[i + p * k]))
}

fn m_step(dtm: &Dtm, design: &Design, es: &EStep, current: &Globals, config: &StmConfig) -> Result<Globals> {
    let mut beta = es.counts.clone();
    for (t, mut row) in beta.row_iter_mut().enumerate() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        } else {
            row.copy_from(&current.beta.row(t));
        }
    }
    let gamma = update_gamma(design, &es.eta, &current.sigma, config.gamma_ridge)?;
    let mu = &design.matrix * &gamma;
    let resid = &es.eta - &mu;
    let d = dtm.n_rows() as f64;
    let mut sigma = resid.transpose() * &resid;
    for nu in &es.nu {
        sigma += nu;
    }
    sigma /= d;
    symmetrize(&mut sigma);
    Ok(Globals { beta, gamma, sigma })
}

fn check_design(design: &Design, n_docs: usize) -> Result<()> {
    if design.n_rows() != n_docs {
        return Err(Error::Misaligned {
            expected: n_docs,
            found: design.n_rows(),
        });
    }
    if design.matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("design matrix has non-finite entries"));
    }
    let xtx = design.matrix.transpose() * &design.matrix;
    let scale = xtx.diagonal().amax().max(1.0);
    if design.matrix.ncols() > n_docs || min_eigenvalue(&xtx) <= 1e-10 * scale {
        return Err(Error::RankDeficient(format!(
            "prevalence design [{}]",
            design.names.join(", ")
        )));
    }
    Ok(())
}

fn random_beta(k: usize, v: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let mut beta = DMatrix::from_fn(k, v, |_, _| gamma.sample(&mut rng) + 1e-3);
    for mut row in beta.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    beta
}

/// Fits the model to a document-term matrix and a prevalence design.
/// Spectral topics mixed with a little uniform mass so no word starts at probability zero.
pub fn spectral_start(dtm: &Dtm, k: usize) -> Result<DMatrix<f64>> {
    let v = dtm.n_cols() as f64;
    let b = spectral_init_observed(dtm, k)?;
    Ok(b.map(|x| (1.0 - SPECTRAL_SMOOTHING) * x + SPECTRAL_SMOOTHING / v))
}

pub fn fit_matrix(dtm: &Dtm, design: &Design, config: &StmConfig, start: Option<Start>) -> Result<StmModel> {
    config.validate()?;
    let d = dtm.n_rows();
    let v = dtm.n_cols();
    let k = config.k;
    let m = k - 1;
    if d == 0 {
        return Err(Error::invalid("no training documents"));
    }
    check_design(design, d)?;
    let p = design.matrix.ncols();

    let (mut globals, eta0) = match start {
        None => {
            let beta = match config.init {
                InitKind::Spectral => spectral_start(dtm, k)?,
                InitKind::Random => random_beta(k, v, config.seed),
            };
            let g = Globals {
                beta,
                gamma: DMatrix::zeros(p, m),
                sigma: DMatrix::identity(m, m) * config.sigma_init,
            };
            (g, DMatrix::zeros(d, m))
        }
        Some(Start::Beta(beta)) => {
            if beta.shape() != (k, v) {
                return Err(Error::Misaligned {
                    expected: k * v,
                    found: beta.len(),
                });
            }
            let g = Globals {
                beta,
                gamma: DMatrix::zeros(p, m),
                sigma: DMatrix::identity(m, m) * config.sigma_init,
            };
            (g, DMatrix::zeros(d, m))
        }
        Some(Start::Model {
            beta,
            gamma,
            sigma,
            eta,
        }) => {
            if beta.shape() != (k, v) || gamma.shape() != (p, m) || sigma.shape() != (m, m) {
                return Err(Error::invalid("warm start does not match K, V or the design"));
            }
            let eta0 = match eta {
                Some(e) if e.shape() == (d, m) => e,
                Some(_) => return Err(Error::invalid("warm-start modes have the wrong shape")),
                None => &design.matrix * &gamma,
            };
            (Globals { beta, gamma, sigma }, eta0)
        }
    };

    let mut es = e_step(dtm, design, &globals, &eta0)?;
    let mut bound = es.doc_bound - ridge_penalty(&globals.gamma, config.gamma_ridge);
    if !bound.is_finite() {
        return Err(Error::NonFiniteBound { iteration: 0 });
    }
    let mut trace = vec![bound];
    let mut converged = false;
    let mut iterations = 0;
    let mut halvings = 0;

    for iter in 1..=config.max_em_iter {
        iterations = iter;
        let proposal = m_step(dtm, design, &es, &globals, config)?;
        let mut accepted = None;
        let mut t = 1.0;
        for attempt in 0..=MAX_HALVINGS {
            let cand = if attempt == 0 {
                proposal.clone()
            } else {
                globals.mix(&proposal, t)
            };
            let es_c = e_step(dtm, design, &cand, &es.eta)?;
            let b_c = es_c.doc_bound - ridge_penalty(&cand.gamma, config.gamma_ridge);
            if !b_c.is_finite() {
                return Err(Error::NonFiniteBound { iteration: iter });
            }
            if b_c >= bound {
                accepted = Some((cand, es_c, b_c));
                break;
            }
            halvings += 1;
            t *= 0.5;
        }
        let Some((g_new, es_new, b_new)) = accepted else {
            log::debug!("stm: no ascent step at iteration {iter}; stopping");
            converged = true;
            break;
        };
        let rel = (b_new - bound) / bound.abs().max(f64::MIN_POSITIVE);
        globals = g_new;
        es = es_new;
        bound = b_new;
        trace.push(bound);
        log::debug!("stm: iteration {iter} bound {bound:.6} rel {rel:.3e} max grad {:.2e}", es.max_grad);
        if rel < config.tolerance {
            converged = true;
            break;
        }
    }

    let mu = &design.matrix * &globals.gamma;
    let mu_mean = (0..m).map(|j| mu.column(j).mean()).collect();
    Ok(StmModel {
        version: MODEL_VERSION,
        config: config.clone(),
        vocabulary: Vec::new(),
        tokenizer_config: None,
        design_names: design.names.clone(),
        beta: globals.beta,
        gamma: globals.gamma,
        sigma: globals.sigma,
        mu,
        eta: es.eta,
        nu: es.nu,
        mu_mean,
        doc_ids: (0..d).map(|i| i.to_string()).collect(),
        bound_trace: trace,
        converged,
        iterations,
        step_halvings: halvings,
    })
}

/// Fits the model to a tokenized (training) corpus, using `config.prevalence` as covariates.
pub fn fit(train: &Corpus, config: &StmConfig) -> Result<StmModel> {
    if !train.is_tokenized() {
        return Err(Error::invalid("corpus must be tokenized before fitting"));
    }
    let design = Design::from_corpus(train, &config.prevalence)?;
    let mut model = fit_matrix(&train.dtm, &design, config, None)?;
    model.vocabulary = train.vocabulary.clone();
    model.tokenizer_config = train.tokenizer_config.clone();
    model.doc_ids = train.documents.iter().map(|d| d.id.clone()).collect();
    Ok(model)
}
