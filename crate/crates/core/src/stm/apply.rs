//! Applying a frozen topic model to new documents.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::estep::{fit_document, DocWords, Prior};
use super::{theta_from_eta, Design, PriorMode, SigmaCorrection, StmModel};
use crate::corpus::{encode, Corpus, Dtm};
use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, cholesky, nearest_spd, symmetrize};

/// Prior variance used when documents are fitted without a prior.
pub const FLAT_PRIOR_VARIANCE: f64 = 1000.0;

/// Prior shared by all new documents under the average mode.
#[derive(Debug, Clone)]
pub struct AveragedPrior {
    pub mu: Vec<f64>,
    /// Covariance used for fitting (projected to SPD when needed).
    pub sigma: DMatrix<f64>,
    /// Covariance before any projection.
    pub raw_sigma: DMatrix<f64>,
    pub projected: bool,
}

/// Topic proportions of documents fitted under a frozen model.
#[derive(Debug, Clone)]
pub struct AppliedDocuments {
    pub prior_mode: PriorMode,
    /// N x (K-1) modes.
    pub eta: DMatrix<f64>,
    /// N x K topic proportions.
    pub theta: DMatrix<f64>,
    pub nu: Vec<DMatrix<f64>>,
    /// Documents with no in-vocabulary tokens; their proportions come from the prior alone.
    pub empty_documents: Vec<usize>,
    /// Tokens dropped per document because they are out of vocabulary or have no mass
    /// under any topic.
    pub dropped_tokens: Vec<usize>,
}

/// Mean and covariance that summarize the training priors once covariate information is
/// averaged away: mu~ is the mean of the training prior means and
/// Sigma~ = Sigma - sum_d (eta_d - mu_d)(eta_d - mu_d)' + sum_d (eta_d - mu~)(eta_d - mu~)'.
pub fn averaged_prior(model: &StmModel) -> Result<AveragedPrior> {
    let d = model.eta.nrows();
    let m = model.sigma.nrows();
    if model.mu.shape() != model.eta.shape() || d == 0 {
        return Err(Error::invalid("model carries no training modes for the averaged prior"));
    }
    let mu_tilde: Vec<f64> = (0..m).map(|j| model.mu.column(j).mean()).collect();
    let mut within = DMatrix::zeros(m, m);
    let mut around = DMatrix::zeros(m, m);
    for i in 0..d {
        let r = (model.eta.row(i) - model.mu.row(i)).transpose();
        within += &r * r.transpose();
        let s = DMatrix::from_fn(m, 1, |j, _| model.eta[(i, j)] - mu_tilde[j]);
        around += &s * s.transpose();
    }
    let scale = match model.config.sigma_correction {
        SigmaCorrection::Literal => 1.0,
        SigmaCorrection::Normalized => 1.0 / d as f64,
    };
    let mut raw = &model.sigma + (around - within) * scale;
    symmetrize(&mut raw);
    let (sigma, projected) = if raw.clone().cholesky().is_some() {
        (raw.clone(), false)
    } else {
        let fixed = nearest_spd(&raw, 1e-8 * raw.diagonal().amax().max(1.0));
        cholesky(&fixed, "averaged prior covariance")?;
        (fixed, true)
    };
    Ok(AveragedPrior {
        mu: mu_tilde,
        sigma,
        raw_sigma: raw,
        projected,
    })
}

/// Fits topic proportions for each row of `dtm` with the topic-word matrix frozen.
/// Covariate mode needs the pre-treatment design of the new documents.
pub fn fit_new_documents(
    model: &StmModel,
    dtm: &Dtm,
    prior_mode: PriorMode,
    design: Option<&Design>,
) -> Result<AppliedDocuments> {
    let m = model.k() - 1;
    let n = dtm.n_rows();
    if dtm.n_cols() != model.n_terms() {
        return Err(Error::Misaligned {
            expected: model.n_terms(),
            found: dtm.n_cols(),
        });
    }
    let (means, sigma) = match prior_mode {
        PriorMode::None => (
            DMatrix::zeros(n, m),
            DMatrix::identity(m, m) * FLAT_PRIOR_VARIANCE,
        ),
        PriorMode::Covariate => {
            if model.uses_treatment() {
                return Err(Error::TreatmentInPrior(super::TREATMENT.into()));
            }
            let design = design.ok_or_else(|| Error::invalid("covariate prior needs the design of the new documents"))?;
            if design.names != model.design_names {
                return Err(Error::invalid(format!(
                    "design columns [{}] do not match the model's [{}]",
                    design.names.join(", "),
                    model.design_names.join(", ")
                )));
            }
            if design.n_rows() != n {
                return Err(Error::Misaligned {
                    expected: n,
                    found: design.n_rows(),
                });
            }
            (&design.matrix * &model.gamma, model.sigma.clone())
        }
        PriorMode::Average => {
            let avg = averaged_prior(model)?;
            (DMatrix::from_fn(n, m, |_, j| avg.mu[j]), avg.sigma)
        }
    };
    let chol = cholesky(&sigma, "prior covariance")?;
    let sigma_inv = chol.inverse();
    let sigma_logdet = chol_logdet(&chol);

    // words with no mass under any topic cannot be explained by the frozen model
    let live: Vec<bool> = (0..model.n_terms())
        .map(|w| model.beta.column(w).iter().any(|&b| b > 0.0))
        .collect();

    let fits: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<(u32, u32)> = dtm.row(i).iter().copied().filter(|&(w, _)| live[w as usize]).collect();
            let dropped: u32 = dtm.row(i).iter().filter(|&&(w, _)| !live[w as usize]).map(|&(_, c)| c).sum();
            let doc = DocWords::new(&row, &model.beta);
            let mu: Vec<f64> = means.row(i).iter().copied().collect();
            let prior = Prior {
                mu: &mu,
                sigma_inv: &sigma_inv,
                sigma_logdet,
            };
            (fit_document(&doc, &prior, &mu), row.is_empty(), dropped as usize)
        })
        .collect();

    let mut eta = DMatrix::zeros(n, m);
    let mut nu = Vec::with_capacity(n);
    let mut empty_documents = Vec::new();
    let mut dropped_tokens = Vec::with_capacity(n);
    for (i, (fit, empty, dropped)) in fits.into_iter().enumerate() {
        for j in 0..m {
            eta[(i, j)] = fit.eta[j];
        }
        nu.push(fit.nu);
        if empty {
            empty_documents.push(i);
        }
        dropped_tokens.push(dropped);
    }
    Ok(AppliedDocuments {
        prior_mode,
        theta: theta_from_eta(&eta),
        eta,
        nu,
        empty_documents,
        dropped_tokens,
    })
}

/// Encodes raw documents with the model's vocabulary and tokenizer, then fits them.
/// Out-of-vocabulary tokens are counted in `dropped_tokens`.
pub fn apply_to_corpus(model: &StmModel, corpus: &Corpus, prior_mode: PriorMode) -> Result<AppliedDocuments> {
    let config = model
        .tokenizer_config
        .as_ref()
        .ok_or_else(|| Error::invalid("model has no tokenizer settings; it was fitted from a bare matrix"))?;
    let encoded = encode(corpus, config, &model.vocabulary)?;
    let design = match prior_mode {
        PriorMode::Covariate if !model.uses_treatment() => {
            let covs: Vec<String> = model.design_names[1..].to_vec();
            Some(Design::from_corpus(corpus, &covs)?)
        }
        _ => None,
    };
    let mut applied = fit_new_documents(model, &encoded.dtm, prior_mode, design.as_ref())?;
    for (i, d) in applied.dropped_tokens.iter_mut().enumerate() {
        *d += encoded.out_of_vocabulary[i];
    }
    Ok(applied)
}
