//! How much do topic-model summaries move when the model is refit on random subsamples?
//!
//! The reference ("truth") is a fit on the full corpus, which is itself only one local mode.
//! Each replication draws a subsample without replacement, refits under one of three
//! starting strategies, matches every tracked reference topic to a subsample topic by cosine
//! similarity of word distributions, and records the topic's mean proportion, the mass the
//! subsample topic puts on the reference topic's top words, and the covariate's effect on
//! the topic proportion.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Dtm;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::matching::{match_topics, MatchMethod};
use crate::stm::{fit_matrix, spectral_start, Design, StmConfig, StmModel, Start};

pub const REFERENCE_NOTE: &str =
    "reference values come from the full-corpus fit, which is one local mode of the evidence bound";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Spectral initialization computed on the subsample.
    ColdSpectral,
    /// Spectral initialization computed once on the full corpus.
    WarmSpectral,
    /// The converged full-corpus parameters and document modes.
    WarmOracle,
}

impl std::str::FromStr for StartMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold_spectral" | "cold" => Ok(StartMode::ColdSpectral),
            "warm_spectral" => Ok(StartMode::WarmSpectral),
            "warm_oracle" => Ok(StartMode::WarmOracle),
            _ => Err(Error::invalid(format!(
                "unknown start mode '{s}' (cold_spectral | warm_spectral | warm_oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityConfig {
    /// Model settings for every fit; `k` is the number of topics.
    pub stm: StmConfig,
    pub sample_sizes: Vec<usize>,
    pub n_reps: usize,
    pub mode: StartMode,
    /// 0-based reference topics to follow.
    pub tracked_topics: Vec<usize>,
    pub matching: MatchMethod,
    /// Design column whose effect on topic proportions is recorded.
    pub covariate: String,
    pub top_words: usize,
    pub seed: u64,
}

impl StabilityConfig {
    pub fn new(stm: StmConfig, covariate: &str) -> Self {
        let k = stm.k;
        StabilityConfig {
            stm,
            sample_sizes: vec![5000, 1000],
            n_reps: 100,
            mode: StartMode::ColdSpectral,
            tracked_topics: (0..k).collect(),
            matching: MatchMethod::Greedy,
            covariate: covariate.to_string(),
            top_words: 10,
            seed: 0,
        }
    }
}

/// Summaries of one topic in one fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicSummary {
    pub theta_mean: f64,
    pub top_word_mass: f64,
    pub effect: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub sample_size: usize,
    pub rep: usize,
    /// 0-based reference topic.
    pub topic: usize,
    /// Subsample topic it was matched to, and their cosine similarity.
    pub matched: usize,
    pub similarity: f64,
    #[serde(flatten)]
    pub summary: TopicSummary,
    pub iterations: usize,
    /// Most negative change of the evidence bound between EM iterations (0 if none fell).
    pub min_bound_step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub note: &'static str,
    pub mode: StartMode,
    pub k: usize,
    pub n_documents: usize,
    pub sample_sizes: Vec<usize>,
    pub n_reps: usize,
    pub tracked_topics: Vec<usize>,
    /// Reference summaries, one per tracked topic.
    pub reference: Vec<TopicSummary>,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    /// Across-replication standard deviation of each tracked topic's θ mean, averaged over
    /// tracked topics.
    pub fn theta_dispersion(&self, sample_size: usize) -> f64 {
        let per_topic: Vec<f64> = self
            .tracked_topics
            .iter()
            .map(|&t| {
                let vals: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.sample_size == sample_size && r.topic == t)
                    .map(|r| r.summary.theta_mean)
                    .collect();
                sd(&vals)
            })
            .collect();
        per_topic.iter().sum::<f64>() / per_topic.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "mode,sample_size,rep,topic,matched,similarity,theta_mean,top_word_mass,effect,ci_low,ci_high,iterations\n",
        );
        let mode = serde_json::to_value(self.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{mode},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.sample_size,
                r.rep + 1,
                r.topic + 1,
                r.matched + 1,
                r.similarity,
                r.summary.theta_mean,
                r.summary.top_word_mass,
                r.summary.effect,
                r.summary.ci_low,
                r.summary.ci_high,
                r.iterations
            ));
        }
        out
    }
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Indices of the reference topic's top words.
fn top_word_indices(beta: &DMatrix<f64>, k: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..beta.ncols()).collect();
    idx.sort_by(|&a, &b| beta[(k, b)].total_cmp(&beta[(k, a)]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

fn summarize(
    theta: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    design: &Design,
    covariate: usize,
    topic: usize,
    top: &[usize],
) -> Result<TopicSummary> {
    let th = DVector::from_iterator(theta.nrows(), theta.column(topic).iter().copied());
    let (coef, inv) = least_squares(&design.matrix, &th, 0.0, design.matrix.ncols())?;
    let resid = &th - &design.matrix * &coef;
    let dof = (theta.nrows() as f64 - design.matrix.ncols() as f64).max(1.0);
    let s2 = resid.norm_squared() / dof;
    let se = (s2 * inv[(covariate, covariate)]).max(0.0).sqrt();
    let effect = coef[covariate];
    Ok(TopicSummary {
        theta_mean: th.mean(),
        top_word_mass: top.iter().map(|&w| beta[(topic, w)]).sum(),
        effect,
        ci_low: effect - 1.959_963_984_540_054 * se,
        ci_high: effect + 1.959_963_984_540_054 * se,
    })
}

/// Fits the reference model on the full corpus.
pub fn fit_reference(dtm: &Dtm, design: &Design, stm: &StmConfig) -> Result<StmModel> {
    fit_matrix(dtm, design, stm, None)
}

pub fn run_stability(dtm: &Dtm, design: &Design, reference: &StmModel, cfg: &StabilityConfig) -> Result<StabilityReport> {
    let d = dtm.n_rows();
    let k = cfg.stm.k;
    if reference.k() != k || reference.beta.ncols() != dtm.n_cols() || reference.eta.nrows() != d {
        return Err(Error::invalid("reference model does not match the corpus or K"));
    }
    if let Some(&n) = cfg.sample_sizes.iter().find(|&&n| n > d || n == 0) {
        return Err(Error::invalid(format!("sample size {n} is not in 1..={d}")));
    }
    if cfg.n_reps == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    let covariate = design
        .names
        .iter()
        .position(|n| *n == cfg.covariate)
        .ok_or_else(|| Error::MissingColumn(cfg.covariate.clone()))?;

    let tops: Vec<Vec<usize>> = cfg
        .tracked_topics
        .iter()
        .map(|&t| {
            if t >= k {
                Err(Error::invalid(format!("tracked topic {} out of range", t + 1)))
            } else {
                Ok(top_word_indices(&reference.beta, t, cfg.top_words))
            }
        })
        .collect::<Result<_>>()?;
    let reference_summary: Vec<TopicSummary> = cfg
        .tracked_topics
        .iter()
        .zip(&tops)
        .map(|(&t, top)| summarize(&reference.theta(), &reference.beta, design, covariate, t, top))
        .collect::<Result<_>>()?;

    let full_spectral = match cfg.mode {
        StartMode::WarmSpectral => Some(spectral_start(dtm, k)?),
        _ => None,
    };

    let jobs: Vec<(usize, usize, usize)> = cfg
        .sample_sizes
        .iter()
        .enumerate()
        .flat_map(|(si, &n)| (0..cfg.n_reps).map(move |r| (si, n, r)))
        .collect();
    let rows: Vec<Vec<StabilityRow>> = jobs
        .into_par_iter()
        .map(|(si, n, rep)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((si as u64) << 32) | rep as u64);
            let mut idx = rand::seq::index::sample(&mut rng, d, n).into_vec();
            idx.sort_unstable();
            let sub = dtm.select_rows(&idx);
            let sub_design = Design {
                names: design.names.clone(),
                matrix: design.matrix.select_rows(&idx),
            };
            let start = match cfg.mode {
                StartMode::ColdSpectral => None,
                StartMode::WarmSpectral => full_spectral.clone().map(Start::Beta),
                StartMode::WarmOracle => Some(Start::Model {
                    beta: reference.beta.clone(),
                    gamma: reference.gamma.clone(),
                    sigma: reference.sigma.clone(),
                    eta: Some(reference.eta.select_rows(&idx)),
                }),
            };
            let model = fit_matrix(&sub, &sub_design, &cfg.stm, start)?;
            let matches = match_topics(&reference.beta, &model.beta, &cfg.tracked_topics, cfg.matching)?;
            let theta = model.theta();
            let min_bound_step = model.bound_trace.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::min);
            cfg.tracked_topics
                .iter()
                .zip(&tops)
                .zip(matches)
                .map(|((&t, top), (j, sim))| {
                    Ok(StabilityRow {
                        sample_size: n,
                        rep,
                        topic: t,
                        matched: j,
                        similarity: sim,
                        summary: summarize(&theta, &model.beta, &sub_design, covariate, j, top)?,
                        iterations: model.iterations,
                        min_bound_step,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    Ok(StabilityReport {
        note: REFERENCE_NOTE,
        mode: cfg.mode,
        k,
        n_documents: d,
        sample_sizes: cfg.sample_sizes.clone(),
        n_reps: cfg.n_reps,
        tracked_topics: cfg.tracked_topics.clone(),
        reference: reference_summary,
        rows: rows.into_iter().flatten().collect(),
    })
}
