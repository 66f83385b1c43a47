//! Structural topic model: logistic-normal topic prevalence driven by document
//! covariates. Fitted on the training split, it is the codebook for text-as-outcome: a
//! frozen model maps each new document to its topic proportions.

mod apply;
mod estep;
mod fit;
pub mod spectral;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenizerConfig};
use crate::error::{Error, Result};
use crate::linalg::softmax_with_reference;

pub use apply::{apply_to_corpus, averaged_prior, fit_new_documents, AppliedDocuments, AveragedPrior, FLAT_PRIOR_VARIANCE};
pub use estep::estep_objective;
pub use fit::{fit, fit_matrix, spectral_start, Start};
pub use spectral::{spectral_init, spectral_init_observed};

pub const MODEL_VERSION: u32 = 1;
pub const INTERCEPT: &str = "(intercept)";
/// Prevalence covariate name that refers to the treatment field of each document.
pub const TREATMENT: &str = "treatment";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Spectral,
    Random,
}

/// How the averaged-prior covariance correction is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaCorrection {
    /// Sigma - sum_d (eta_d - mu_d)(..)' + sum_d (eta_d - mu~)(..)', sums unnormalized.
    Literal,
    /// Same sums divided by the number of training documents.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    None,
    Covariate,
    Average,
}

impl std::str::FromStr for PriorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PriorMode::None),
            "covariate" => Ok(PriorMode::Covariate),
            "average" => Ok(PriorMode::Average),
            _ => Err(Error::invalid(format!("unknown prior mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmConfig {
    pub k: usize,
    /// Prevalence covariates; `treatment` names the treatment field.
    pub prevalence: Vec<String>,
    pub max_em_iter: usize,
    /// Relative change of the evidence bound that ends the EM loop.
    pub tolerance: f64,
    pub gamma_ridge: f64,
    pub init: InitKind,
    pub sigma_init: f64,
    pub sigma_correction: SigmaCorrection,
    pub seed: u64,
}

impl Default for StmConfig {
    fn default() -> Self {
        StmConfig {
            k: 10,
            prevalence: Vec::new(),
            max_em_iter: 200,
            tolerance: 1e-5,
            gamma_ridge: 0.1,
            init: InitKind::Spectral,
            sigma_init: 20.0,
            sigma_correction: SigmaCorrection::Literal,
            seed: 0,
        }
    }
}

impl StmConfig {
    pub fn with_k(k: usize) -> Self {
        StmConfig {
            k,
            ..StmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("K must be at least 2"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.gamma_ridge < 0.0 {
            return Err(Error::invalid("gamma ridge must be non-negative"));
        }
        Ok(())
    }
}

/// Intercept plus prevalence covariates, one row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
}

impl Design {
    pub fn intercept_only(n: usize) -> Self {
        Design {
            names: vec![INTERCEPT.to_string()],
            matrix: DMatrix::from_element(n, 1, 1.0),
        }
    }

    pub fn from_corpus(corpus: &Corpus, covariates: &[String]) -> Result<Self> {
        let n = corpus.len();
        let mut names = vec![INTERCEPT.to_string()];
        let mut matrix = DMatrix::from_element(n, 1 + covariates.len(), 1.0);
        for (j, name) in covariates.iter().enumerate() {
            let col = corpus.column(name)?;
            for (i, v) in col.into_iter().enumerate() {
                matrix[(i, j + 1)] = v;
            }
            names.push(name.clone());
        }
        Ok(Design { names, matrix })
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StmModel {
    pub version: u32,
    pub config: StmConfig,
    pub vocabulary: Vec<String>,
    pub tokenizer_config: Option<TokenizerConfig>,
    pub design_names: Vec<String>,
    /// K x V topic-word distributions.
    #[serde(with = "crate::serde_matrix")]
    pub beta: DMatrix<f64>,
    /// P x (K-1) prevalence coefficients.
    #[serde(with = "crate::serde_matrix")]
    pub gamma: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub sigma: DMatrix<f64>,
    /// D x (K-1) prior means of the training documents, design * gamma.
    #[serde(with = "crate::serde_matrix")]
    pub mu: DMatrix<f64>,
    /// D x (K-1) variational modes of the training documents.
    #[serde(with = "crate::serde_matrix")]
    pub eta: DMatrix<f64>,
    /// Laplace covariances of the training documents. Not persisted.
    #[serde(skip)]
    pub nu: Vec<DMatrix<f64>>,
    pub mu_mean: Vec<f64>,
    pub doc_ids: Vec<String>,
    pub bound_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// EM proposals that had to be shortened to keep the bound from decreasing.
    pub step_halvings: usize,
}

impl StmModel {
    pub fn k(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.beta.ncols()
    }

    /// Topic proportions of the training documents.
    pub fn theta(&self) -> DMatrix<f64> {
        theta_from_eta(&self.eta)
    }

    pub fn uses_treatment(&self) -> bool {
        self.design_names.iter().any(|n| n == TREATMENT)
    }
}

pub fn theta_from_eta(eta: &DMatrix<f64>) -> DMatrix<f64> {
    let k = eta.ncols() + 1;
    let mut theta = DMatrix::zeros(eta.nrows(), k);
    for i in 0..eta.nrows() {
        let row: Vec<f64> = eta.row(i).iter().copied().collect();
        for (j, v) in softmax_with_reference(&row).into_iter().enumerate() {
            theta[(i, j)] = v;
        }
    }
    theta
}
