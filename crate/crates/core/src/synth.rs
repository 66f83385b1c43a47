//! Synthetic data generators with known ground truth: corpora drawn from the topic model's
//! generative process, text for end-to-end runs, and planted binary-feature data.

use nalgebra::DMatrix;
use rand::distributions::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use crate::corpus::{Document, Dtm};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, softmax_with_reference};
use crate::stm::{Design, INTERCEPT};

/// Parameters of a corpus drawn from the topic model with one binary covariate.
#[derive(Debug, Clone)]
pub struct StmSimSpec {
    pub k: usize,
    pub v: usize,
    pub d: usize,
    pub mean_doc_len: f64,
    /// Dirichlet concentration of each topic's word distribution (ignored if `beta` is set).
    pub beta_concentration: f64,
    pub beta: Option<DMatrix<f64>>,
    /// 2 x (K-1): intercept row, covariate row.
    pub gamma: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// Fraction of documents with covariate 1 (assigned exactly, then shuffled).
    pub covariate_share: f64,
}

impl StmSimSpec {
    /// Covariate effect `effect` on the first log-odds, identity-scaled covariance.
    pub fn new(k: usize, v: usize, d: usize, effect: f64) -> Self {
        let mut gamma = DMatrix::zeros(2, k - 1);
        gamma[(1, 0)] = effect;
        StmSimSpec {
            k,
            v,
            d,
            mean_doc_len: 100.0,
            beta_concentration: 0.1,
            beta: None,
            gamma,
            sigma: DMatrix::identity(k - 1, k - 1) * 0.5,
            covariate_share: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StmSimulation {
    pub dtm: Dtm,
    /// Intercept and the covariate, named `covariate_name`.
    pub design: Design,
    pub beta: DMatrix<f64>,
    pub eta: DMatrix<f64>,
    pub theta: DMatrix<f64>,
}

pub fn dirichlet_rows(k: usize, v: usize, concentration: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut m = DMatrix::from_fn(k, v, |_, _| g.sample(rng).max(1e-300));
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// Topics that put uniform mass on disjoint blocks of `block` consecutive words.
pub fn block_beta(k: usize, block: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k * block, |t, w| if w / block == t { 1.0 / block as f64 } else { 0.0 })
}

/// Draws a corpus from the logistic-normal topic model.
pub fn simulate_stm(spec: &StmSimSpec, covariate_name: &str, seed: u64) -> Result<StmSimulation> {
    let (k, v, d) = (spec.k, spec.v, spec.d);
    if k < 2 || spec.gamma.shape() != (2, k - 1) || spec.sigma.shape() != (k - 1, k - 1) {
        return Err(Error::invalid("simulation spec has inconsistent dimensions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = match &spec.beta {
        Some(b) if b.shape() == (k, v) => b.clone(),
        Some(_) => return Err(Error::invalid("simulation beta has the wrong shape")),
        None => dirichlet_rows(k, v, spec.beta_concentration, &mut rng),
    };
    let n_treated = (spec.covariate_share * d as f64).round() as usize;
    let mut x: Vec<f64> = (0..d).map(|i| if i < n_treated { 1.0 } else { 0.0 }).collect();
    x.shuffle(&mut rng);

    let l = cholesky(&spec.sigma, "simulation covariance")?.l();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let len = Poisson::new(spec.mean_doc_len).map_err(|e| Error::invalid(e.to_string()))?;
    let topic_words: Vec<WeightedIndex<f64>> = beta
        .row_iter()
        .map(|r| WeightedIndex::new(r.iter().copied()).expect("topic has mass"))
        .collect();

    let m = k - 1;
    let mut eta = DMatrix::zeros(d, m);
    let mut theta = DMatrix::zeros(d, k);
    let mut dtm = Dtm::new(v);
    for i in 0..d {
        let z = nalgebra::DVector::from_fn(m, |_, _| normal.sample(&mut rng));
        let e = &l * z;
        for j in 0..m {
            eta[(i, j)] = spec.gamma[(0, j)] + x[i] * spec.gamma[(1, j)] + e[j];
        }
        let th = softmax_with_reference(&eta.row(i).iter().copied().collect::<Vec<_>>());
        for (j, t) in th.iter().enumerate() {
            theta[(i, j)] = *t;
        }
        dtm.push_row(draw_document(&th, &topic_words, &len, v, &mut rng))?;
    }
    let mut design = Design::intercept_only(d);
    design.names.push(covariate_name.to_string());
    design.matrix = DMatrix::from_fn(d, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    debug_assert_eq!(design.names[0], INTERCEPT);
    Ok(StmSimulation {
        dtm,
        design,
        beta,
        eta,
        theta,
    })
}

/// Both potential outcomes of every unit in a fixed population: the topic proportions a
/// unit would express under control and under treatment (covariate row of `gamma` added to
/// the log-odds, same unit-level noise), and one document drawn under each.
#[derive(Debug, Clone)]
pub struct TextPopulation {
    pub theta_control: DMatrix<f64>,
    pub theta_treated: DMatrix<f64>,
    pub control: Dtm,
    pub treated: Dtm,
    pub beta: DMatrix<f64>,
}

/// Potential topic proportions (control, treated) for `spec.d` units.
pub fn potential_proportions(spec: &StmSimSpec, rng: &mut impl Rng) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = spec.k;
    if k < 2 || spec.gamma.shape() != (2, k - 1) || spec.sigma.shape() != (k - 1, k - 1) {
        return Err(Error::invalid("simulation spec has inconsistent dimensions"));
    }
    let m = k - 1;
    let l = cholesky(&spec.sigma, "simulation covariance")?.l();
    let mut out = [DMatrix::zeros(spec.d, k), DMatrix::zeros(spec.d, k)];
    for i in 0..spec.d {
        let z = nalgebra::DVector::from_fn(m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let e = &l * z;
        for (t, theta) in out.iter_mut().enumerate() {
            let eta: Vec<f64> = (0..m).map(|j| spec.gamma[(0, j)] + t as f64 * spec.gamma[(1, j)] + e[j]).collect();
            for (j, p) in softmax_with_reference(&eta).into_iter().enumerate() {
                theta[(i, j)] = p;
            }
        }
    }
    let [control, treated] = out;
    Ok((control, treated))
}

pub fn text_population(spec: &StmSimSpec, seed: u64) -> Result<TextPopulation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = match &spec.beta {
        Some(b) if b.shape() == (spec.k, spec.v) => b.clone(),
        Some(_) => return Err(Error::invalid("simulation beta has the wrong shape")),
        None => dirichlet_rows(spec.k, spec.v, spec.beta_concentration, &mut rng),
    };
    let (theta_control, theta_treated) = potential_proportions(spec, &mut rng)?;
    let topic_words: Vec<WeightedIndex<f64>> = beta
        .row_iter()
        .map(|r| WeightedIndex::new(r.iter().copied()).expect("topic has mass"))
        .collect();
    let len = Poisson::new(spec.mean_doc_len).map_err(|e| Error::invalid(e.to_string()))?;
    let mut docs = [Dtm::new(spec.v), Dtm::new(spec.v)];
    for i in 0..spec.d {
        for (theta, dtm) in [&theta_control, &theta_treated].into_iter().zip(docs.iter_mut()) {
            let th: Vec<f64> = theta.row(i).iter().copied().collect();
            dtm.push_row(draw_document(&th, &topic_words, &len, spec.v, &mut rng))?;
        }
    }
    let [control, treated] = docs;
    Ok(TextPopulation {
        theta_control,
        theta_treated,
        control,
        treated,
        beta,
    })
}

fn draw_document(
    theta: &[f64],
    topic_words: &[WeightedIndex<f64>],
    len: &Poisson<f64>,
    v: usize,
    rng: &mut impl Rng,
) -> Vec<(u32, u32)> {
    let topics = WeightedIndex::new(theta).expect("simplex");
    let n: f64 = len.sample(rng);
    let n = (n as usize).max(2);
    let mut counts = vec![0u32; v];
    for _ in 0..n {
        let t = topics.sample(rng);
        counts[topic_words[t].sample(rng)] += 1;
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(w, &c)| (w as u32, c))
        .collect()
}

const THEMES: [&[&str]; 5] = [
    &["border", "wall", "deport", "illegal", "crossing", "patrol", "fence", "smuggling", "enforcement", "detention", "asylum", "visa"],
    &["jobs", "wages", "economy", "workers", "taxes", "business", "labor", "employment", "growth", "farming", "industry", "market"],
    &["family", "children", "community", "church", "neighbors", "culture", "language", "school", "tradition", "values", "parents", "faith"],
    &["crime", "prison", "police", "violence", "drugs", "gangs", "arrest", "court", "judge", "sentence", "law", "safety"],
    &["citizenship", "amnesty", "reform", "congress", "senate", "bill", "vote", "party", "president", "policy", "debate", "election"],
];
const FILLER: [&str; 16] = [
    "think", "people", "country", "really", "believe", "important", "should", "would", "need", "america",
    "government", "issue", "problem", "way", "many", "time",
];

/// Free-text answers to an open-ended question about immigration, two randomized arms.
///
/// Each answer mixes five themes; treated respondents talk more about the first theme
/// (`effect` on its log-odds). Documents carry an integer `age_group` covariate in 0..3 and
/// an outcome that depends on whether the answer dwells on the second theme.
pub fn immigration_corpus(n: usize, effect: f64, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arms: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    arms.shuffle(&mut rng);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let len = Poisson::new(40.0).unwrap();
    (0..n)
        .map(|i| {
            let mut eta: Vec<f64> = (0..4).map(|_| 0.8 * normal.sample(&mut rng)).collect();
            eta[0] += effect * arms[i];
            let theta = softmax_with_reference(&eta);
            let topics = WeightedIndex::new(&theta).unwrap();
            let n_words = (len.sample(&mut rng) as usize).max(8);
            let mut words = Vec::with_capacity(n_words);
            for _ in 0..n_words {
                if rng.gen_bool(0.15) {
                    words.push(*FILLER.choose(&mut rng).unwrap());
                } else {
                    let t = topics.sample(&mut rng);
                    words.push(*THEMES[t].choose(&mut rng).unwrap());
                }
            }
            let outcome = 2.0 * theta[1] + 0.2 * normal.sample(&mut rng);
            Document::new(format!("r{i:05}"), words.join(" "))
                .with_treatment(arms[i])
                .with_outcome(outcome)
                .with_covariate("age_group", rng.gen_range(0..3) as f64)
        })
        .collect()
}

/// Text-like data with planted binary features for the supervised feature model.
#[derive(Debug, Clone)]
pub struct PlantedFeatures {
    /// D x V word counts.
    pub x: DMatrix<f64>,
    /// D x K planted binary features.
    pub z: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Word indices of each feature's signature.
    pub signatures: Vec<Vec<usize>>,
}

/// Each feature is present with probability 1/2 and raises the expected count of its own
/// disjoint block of `signature` words by `lift` over a background rate of 1.
/// Y = z coef + N(0, noise_sd^2).
pub fn planted_features(
    d: usize,
    signature: usize,
    extra_words: usize,
    coefs: &[f64],
    noise_sd: f64,
    lift: f64,
    seed: u64,
) -> PlantedFeatures {
    let k = coefs.len();
    let v = k * signature + extra_words;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(d, k, |_, _| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    let signatures: Vec<Vec<usize>> = (0..k).map(|f| (f * signature..(f + 1) * signature).collect()).collect();
    let noise = Normal::new(0.0, noise_sd.max(0.0)).unwrap();
    let mut x = DMatrix::zeros(d, v);
    let mut y = Vec::with_capacity(d);
    for i in 0..d {
        for w in 0..v {
            let mut rate = 1.0;
            for f in 0..k {
                if z[(i, f)] == 1.0 && signatures[f].contains(&w) {
                    rate += lift;
                }
            }
            x[(i, w)] = Poisson::new(rate).unwrap().sample(&mut rng);
        }
        let mean: f64 = (0..k).map(|f| z[(i, f)] * coefs[f]).sum();
        y.push(mean + if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 });
    }
    PlantedFeatures { x, z, y, signatures }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_is_deterministic_and_consistent() {
        let spec = StmSimSpec::new(3, 20, 30, 0.5);
        let a = simulate_stm(&spec, "x", 7).unwrap();
        let b = simulate_stm(&spec, "x", 7).unwrap();
        assert_eq!(a.dtm, b.dtm);
        assert_eq!(a.design.matrix.column(1).sum(), 15.0);
        for r in a.theta.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn immigration_corpus_is_balanced() {
        let docs = immigration_corpus(40, 1.0, 1);
        assert_eq!(docs.iter().filter(|d| d.treatment == Some(1.0)).count(), 20);
        assert!(docs.iter().all(|d| !d.text.is_empty()));
    }

    #[test]
    fn planted_signatures_are_disjoint() {
        let p = planted_features(50, 10, 5, &[2.0, -1.0], 0.1, 3.0, 3);
        assert_eq!(p.x.ncols(), 25);
        assert!(p.signatures[0].iter().all(|w| !p.signatures[1].contains(w)));
    }
}
