//! Supervised Indian Buffet Process: binary latent features that explain both the
//! (standardized) word counts of a document and its outcome.
//!
//! Generative model, truncated at `k_max` features:
//!
//! ```text
//! v_k ~ Beta(alpha, 1)            pi_k = prod_{j<=k} v_j
//! z_ik ~ Bernoulli(pi_k)
//! A_k ~ N(0, sigma_a2 I)          X_i ~ N(z_i A, sigma_n2 I)
//! beta ~ N(0, sigma_beta2 I)      tau ~ Gamma(a, b)        Y_i ~ N(z_i beta, 1/tau)
//! ```
//!
//! Fitted by mean-field coordinate ascent with q(v_k) = Beta(tau1_k, tau2_k),
//! q(z_ik) = Bernoulli(nu_ik), q(A_k) = N(phi_k, Phi_k I), q(beta) = N(m, S) and
//! q(tau) = Gamma(c, d). E[log(1 - pi_k)] has no closed form and is replaced by the usual
//! multinomial lower bound, whose auxiliary distribution is another coordinate. Every update
//! maximizes the bound exactly in its own block, so the bound never decreases.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, cholesky, symmetrize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SibpConfig {
    pub alpha: f64,
    pub k_max: usize,
    pub sigma_n2: f64,
    pub sigma_a2: f64,
    pub sigma_beta2: f64,
    pub a: f64,
    pub b: f64,
    pub max_iter: usize,
    /// Relative change of the bound that ends a run.
    pub tolerance: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Re-estimate sigma_n2 after each sweep instead of keeping it fixed.
    pub learn_sigma_n: bool,
    /// Sweeps that ignore the outcome before the supervised fit starts.
    pub warmup_iter: usize,
}

impl Default for SibpConfig {
    fn default() -> Self {
        SibpConfig {
            alpha: 2.0,
            k_max: 5,
            sigma_n2: 1.0,
            sigma_a2: 1.0,
            sigma_beta2: 10.0,
            a: 1.0,
            b: 1.0,
            max_iter: 500,
            tolerance: 1e-7,
            seed: 0,
            restarts: 10,
            learn_sigma_n: false,
            warmup_iter: 50,
        }
    }
}

impl SibpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("sigma_n2", self.sigma_n2),
            ("sigma_a2", self.sigma_a2),
            ("sigma_beta2", self.sigma_beta2),
            ("a", self.a),
            ("b", self.b),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k_max == 0 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("at least one restart is needed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SibpModel {
    pub config: SibpConfig,
    /// Posterior mean stick products, nonincreasing.
    pub pi: Vec<f64>,
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    /// k_max x V posterior means of the feature loadings.
    #[serde(with = "crate::serde_matrix")]
    pub a_mean: DMatrix<f64>,
    /// Per-feature isotropic posterior variance of the loadings.
    pub a_var: Vec<f64>,
    pub beta_mean: Vec<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub beta_cov: DMatrix<f64>,
    /// Gamma posterior of the outcome precision.
    pub tau_shape: f64,
    pub tau_rate: f64,
    pub sigma_n2: f64,
    /// D x k_max feature probabilities of the training documents.
    #[serde(with = "crate::serde_matrix")]
    pub nu: DMatrix<f64>,
    pub bound_trace: Vec<f64>,
    pub converged: bool,
    /// Index of the restart that was kept and the final bound of every restart.
    pub best_restart: usize,
    pub restart_bounds: Vec<f64>,
}

impl SibpModel {
    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn n_terms(&self) -> usize {
        self.a_mean.ncols()
    }

    /// Expected outcome precision.
    pub fn tau_mean(&self) -> f64 {
        self.tau_shape / self.tau_rate
    }

    /// E[log pi_k] - E[log(1 - pi_k)] under the fitted sticks (the second term through its
    /// lower bound): the log-odds a feature has before any text is seen.
    pub fn prior_log_odds(&self) -> Vec<f64> {
        let sk = sticks(&self.tau1, &self.tau2);
        sk.elog_pi.iter().zip(&sk.elog_not_pi).map(|(a, b)| a - b).collect()
    }
}

/// Binary treatment profile of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentVector {
    pub z: Vec<u8>,
    pub probs: Vec<f64>,
}

/// pi_k = prod_{j <= k} v_j.
pub fn stick_breaking(v: &[f64]) -> Result<Vec<f64>> {
    if let Some(x) = v.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::invalid(format!("stick fraction {x} outside (0, 1]")));
    }
    let mut acc = 1.0;
    Ok(v.iter()
        .map(|x| {
            acc *= x;
            acc
        })
        .collect())
}

/// Terms of q(v) needed by the other updates.
struct Sticks {
    /// E[log pi_k] = sum_{m<=k} psi(tau1_m) - psi(tau1_m + tau2_m).
    elog_pi: Vec<f64>,
    /// Lower bound on E[log(1 - pi_k)] at the optimal auxiliary distribution.
    elog_not_pi: Vec<f64>,
    /// Auxiliary distributions q_k over 0..=k.
    q: Vec<Vec<f64>>,
}

fn sticks(tau1: &[f64], tau2: &[f64]) -> Sticks {
    let k = tau1.len();
    let d1: Vec<f64> = tau1.iter().map(|&t| digamma(t)).collect();
    let d2: Vec<f64> = tau2.iter().map(|&t| digamma(t)).collect();
    let ds: Vec<f64> = tau1.iter().zip(tau2).map(|(a, b)| digamma(a + b)).collect();
    let mut elog_pi = Vec::with_capacity(k);
    let mut acc = 0.0;
    for m in 0..k {
        acc += d1[m] - ds[m];
        elog_pi.push(acc);
    }
    let mut elog_not_pi = Vec::with_capacity(k);
    let mut q = Vec::with_capacity(k);
    for kk in 0..k {
        // log q_{k,y} = psi(tau2_y) + sum_{n<y} psi(tau1_n) - sum_{n<=y} psi(tau1_n + tau2_n) + const
        let mut logits = Vec::with_capacity(kk + 1);
        let mut s1 = 0.0;
        let mut ss = 0.0;
        for y in 0..=kk {
            ss += ds[y];
            logits.push(d2[y] + s1 - ss);
            s1 += d1[y];
        }
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        // at the optimum the bound equals the log normalizer
        elog_not_pi.push(lse);
        q.push(logits.iter().map(|l| (l - lse).exp()).collect());
    }
    Sticks {
        elog_pi,
        elog_not_pi,
        q,
    }
}

#[derive(Clone)]
struct State {
    tau1: Vec<f64>,
    tau2: Vec<f64>,
    phi: DMatrix<f64>,
    big_phi: Vec<f64>,
    nu: DMatrix<f64>,
    m: DVector<f64>,
    s: DMatrix<f64>,
    c: f64,
    d: f64,
    sigma_n2: f64,
}

struct Data<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

fn beta_entropy(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b)
        + (a + b - 2.0) * digamma(a + b)
}

/// E over q of (Y_i - z_i beta)^2, with B = S + m m'.
fn expected_sq_resid(y: f64, nu: &[f64], m: &DVector<f64>, bmat: &DMatrix<f64>) -> f64 {
    let k = nu.len();
    let mut quad = 0.0;
    let mut lin = 0.0;
    for a in 0..k {
        lin += nu[a] * m[a];
        quad += nu[a] * bmat[(a, a)];
        for b in 0..k {
            if a != b {
                quad += nu[a] * nu[b] * bmat[(a, b)];
            }
        }
    }
    y * y - 2.0 * y * lin + quad
}

/// E over q of |X_i - z_i A|^2 given the residual X_i - nu_i phi.
fn expected_sq_text(resid: &[f64], nu: &[f64], phi: &DMatrix<f64>, big_phi: &[f64], v: usize) -> f64 {
    let mut s: f64 = resid.iter().map(|r| r * r).sum();
    for k in 0..nu.len() {
        let n2 = phi.row(k).norm_squared();
        s += nu[k] * (v as f64 * big_phi[k] + n2) - nu[k] * nu[k] * n2;
    }
    s
}

fn residuals(x: &DMatrix<f64>, nu: &DMatrix<f64>, phi: &DMatrix<f64>) -> DMatrix<f64> {
    x - nu * phi
}

fn bound(cfg: &SibpConfig, data: &Data, st: &State) -> f64 {
    let (n, v) = data.x.shape();
    let k = st.tau1.len();
    let sk = sticks(&st.tau1, &st.tau2);
    let mut f = 0.0;
    // sticks
    for j in 0..k {
        let elog_v = digamma(st.tau1[j]) - digamma(st.tau1[j] + st.tau2[j]);
        f += cfg.alpha.ln() + (cfg.alpha - 1.0) * elog_v + beta_entropy(st.tau1[j], st.tau2[j]);
    }
    // features: prior and entropy
    for i in 0..n {
        for j in 0..k {
            let p = st.nu[(i, j)];
            f += p * sk.elog_pi[j] + (1.0 - p) * sk.elog_not_pi[j] - xlogx(p) - xlogx(1.0 - p);
        }
    }
    // loadings
    for j in 0..k {
        let n2 = st.phi.row(j).norm_squared();
        f += -0.5 * v as f64 * (LN_2PI + cfg.sigma_a2.ln()) - (n2 + v as f64 * st.big_phi[j]) / (2.0 * cfg.sigma_a2);
        f += 0.5 * v as f64 * (LN_2PI + 1.0 + st.big_phi[j].ln());
    }
    // text likelihood
    let resid = residuals(data.x, &st.nu, &st.phi);
    let mut sq = 0.0;
    for i in 0..n {
        let r: Vec<f64> = resid.row(i).iter().copied().collect();
        let nu: Vec<f64> = st.nu.row(i).iter().copied().collect();
        sq += expected_sq_text(&r, &nu, &st.phi, &st.big_phi, v);
    }
    f += -0.5 * (n * v) as f64 * (LN_2PI + st.sigma_n2.ln()) - sq / (2.0 * st.sigma_n2);
    // outcome coefficients
    let chol = cholesky(&st.s, "outcome coefficient covariance").expect("S is SPD");
    f += -0.5 * k as f64 * (LN_2PI + cfg.sigma_beta2.ln()) - (st.m.norm_squared() + st.s.trace()) / (2.0 * cfg.sigma_beta2);
    f += 0.5 * (k as f64 * (LN_2PI + 1.0) + chol_logdet(&chol));
    // precision
    let e_tau = st.c / st.d;
    let elog_tau = digamma(st.c) - st.d.ln();
    f += cfg.a * cfg.b.ln() - ln_gamma(cfg.a) + (cfg.a - 1.0) * elog_tau - cfg.b * e_tau;
    f += st.c - st.d.ln() + ln_gamma(st.c) + (1.0 - st.c) * digamma(st.c);
    // outcome likelihood
    let bmat = &st.s + &st.m * st.m.transpose();
    let mut ysq = 0.0;
    for i in 0..n {
        let nu: Vec<f64> = st.nu.row(i).iter().copied().collect();
        ysq += expected_sq_resid(data.y[i], &nu, &st.m, &bmat);
    }
    f += 0.5 * n as f64 * (elog_tau - LN_2PI) - 0.5 * e_tau * ysq;
    f
}

fn update_loadings(cfg: &SibpConfig, data: &Data, st: &mut State) {
    let k = st.tau1.len();
    let mut resid = residuals(data.x, &st.nu, &st.phi);
    for j in 0..k {
        let col = st.nu.column(j).into_owned();
        // add feature j back: resid_j = X - sum_{l != j} nu_l phi_l
        resid += &col * st.phi.row(j);
        let mass = col.sum();
        let var = 1.0 / (1.0 / cfg.sigma_a2 + mass / st.sigma_n2);
        let mean = (col.transpose() * &resid) * (var / st.sigma_n2);
        st.phi.set_row(j, &mean);
        st.big_phi[j] = var;
        resid -= &col * st.phi.row(j);
    }
}

/// Coordinate updates of one document's feature probabilities. `outcome` carries
/// (Y_i, E[tau], B = S + m m') when the outcome is part of the evidence.
fn update_document(
    x: &[f64],
    nu: &mut [f64],
    phi: &DMatrix<f64>,
    big_phi: &[f64],
    sigma_n2: f64,
    sk: &Sticks,
    outcome: Option<(f64, f64, &DVector<f64>, &DMatrix<f64>)>,
) {
    let k = nu.len();
    let v = x.len();
    let mut resid: Vec<f64> = x.to_vec();
    for j in 0..k {
        for w in 0..v {
            resid[w] -= nu[j] * phi[(j, w)];
        }
    }
    for j in 0..k {
        let row = phi.row(j);
        let n2 = row.norm_squared();
        // phi_j . (X_i - sum_{l != j} nu_l phi_l)
        let dot: f64 = row.iter().zip(&resid).map(|(p, r)| p * r).sum::<f64>() + nu[j] * n2;
        let mut logit = sk.elog_pi[j] - sk.elog_not_pi[j]
            - (v as f64 * big_phi[j] + n2 - 2.0 * dot) / (2.0 * sigma_n2);
        if let Some((y, e_tau, m, bmat)) = outcome {
            let cross: f64 = (0..k).filter(|&l| l != j).map(|l| nu[l] * bmat[(j, l)]).sum();
            logit -= 0.5 * e_tau * (bmat[(j, j)] - 2.0 * y * m[j] + 2.0 * cross);
        }
        let new = 1.0 / (1.0 + (-logit).exp());
        let delta = new - nu[j];
        if delta != 0.0 {
            for w in 0..v {
                resid[w] -= delta * row[w];
            }
            nu[j] = new;
        }
    }
}

fn update_features(data: &Data, st: &mut State, supervised: bool) {
    let sk = sticks(&st.tau1, &st.tau2);
    let e_tau = st.c / st.d;
    let bmat = &st.s + &st.m * st.m.transpose();
    let (n, k) = st.nu.shape();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = data.x.row(i).iter().copied().collect();
            let mut nu: Vec<f64> = st.nu.row(i).iter().copied().collect();
            let outcome = supervised.then(|| (data.y[i], e_tau, &st.m, &bmat));
            update_document(&x, &mut nu, &st.phi, &st.big_phi, st.sigma_n2, &sk, outcome);
            nu
        })
        .collect();
    for (i, r) in rows.into_iter().enumerate() {
        for j in 0..k {
            st.nu[(i, j)] = r[j];
        }
    }
}

fn update_outcome_coefficients(cfg: &SibpConfig, data: &Data, st: &mut State) -> Result<()> {
    let (n, k) = st.nu.shape();
    let e_tau = st.c / st.d;
    let mut ezz = st.nu.transpose() * &st.nu;
    for j in 0..k {
        ezz[(j, j)] = st.nu.column(j).sum();
    }
    let mut prec = ezz * e_tau;
    for j in 0..k {
        prec[(j, j)] += 1.0 / cfg.sigma_beta2;
    }
    symmetrize(&mut prec);
    let chol = cholesky(&prec, "outcome coefficient precision")?;
    let rhs = st.nu.transpose() * DVector::from_column_slice(data.y) * e_tau;
    st.m = chol.solve(&rhs);
    st.s = chol.inverse();
    symmetrize(&mut st.s);
    debug_assert_eq!(st.nu.nrows(), n);
    Ok(())
}

fn update_precision(cfg: &SibpConfig, data: &Data, st: &mut State) {
    let n = st.nu.nrows();
    let bmat = &st.s + &st.m * st.m.transpose();
    let mut ysq = 0.0;
    for i in 0..n {
        let nu: Vec<f64> = st.nu.row(i).iter().copied().collect();
        ysq += expected_sq_resid(data.y[i], &nu, &st.m, &bmat);
    }
    st.c = cfg.a + 0.5 * n as f64;
    st.d = cfg.b + 0.5 * ysq;
}

fn update_noise(data: &Data, st: &mut State) {
    let (n, v) = data.x.shape();
    let resid = residuals(data.x, &st.nu, &st.phi);
    let mut sq = 0.0;
    for i in 0..n {
        let r: Vec<f64> = resid.row(i).iter().copied().collect();
        let nu: Vec<f64> = st.nu.row(i).iter().copied().collect();
        sq += expected_sq_text(&r, &nu, &st.phi, &st.big_phi, v);
    }
    st.sigma_n2 = (sq / (n * v) as f64).max(1e-10);
}

fn update_sticks(cfg: &SibpConfig, st: &mut State) {
    let (n, k) = st.nu.shape();
    let q = sticks(&st.tau1, &st.tau2).q;
    let on: Vec<f64> = (0..k).map(|j| st.nu.column(j).sum()).collect();
    let off: Vec<f64> = on.iter().map(|s| n as f64 - s).collect();
    for j in 0..k {
        let mut t1 = cfg.alpha;
        let mut t2 = 1.0;
        for m in j..k {
            t1 += on[m];
            t2 += off[m] * q[m][j];
            if m > j {
                t1 += off[m] * q[m][j + 1..=m].iter().sum::<f64>();
            }
        }
        st.tau1[j] = t1;
        st.tau2[j] = t2;
    }
}

fn initial_state(cfg: &SibpConfig, n: usize, v: usize, rng: &mut ChaCha8Rng) -> State {
    let k = cfg.k_max;
    State {
        tau1: vec![cfg.alpha; k],
        tau2: vec![1.0; k],
        phi: DMatrix::zeros(k, v),
        big_phi: vec![cfg.sigma_a2; k],
        nu: DMatrix::from_fn(n, k, |_, _| if rng.gen_bool(0.5) { 0.9 } else { 0.1 }),
        m: DVector::zeros(k),
        s: DMatrix::identity(k, k) * cfg.sigma_beta2,
        c: cfg.a,
        d: cfg.b,
        sigma_n2: cfg.sigma_n2,
    }
}

fn sweep(cfg: &SibpConfig, data: &Data, st: &mut State) -> Result<()> {
    update_loadings(cfg, data, st);
    update_features(data, st, true);
    update_outcome_coefficients(cfg, data, st)?;
    update_precision(cfg, data, st);
    if cfg.learn_sigma_n {
        update_noise(data, st);
    }
    update_sticks(cfg, st);
    Ok(())
}

/// Standardized text cannot tell a feature from its complement; only the outcome term
/// can. After the text-only warm-up each feature is tried in both orientations and the
/// one with the higher bound after a few supervised sweeps is kept.
fn orient(cfg: &SibpConfig, data: &Data, st: State) -> Result<State> {
    const SWEEPS: usize = 5;
    let mut current = st;
    for j in 0..current.nu.ncols() {
        let mut keep = current.clone();
        let mut flip = current.clone();
        for i in 0..flip.nu.nrows() {
            flip.nu[(i, j)] = 1.0 - flip.nu[(i, j)];
        }
        for _ in 0..SWEEPS {
            sweep(cfg, data, &mut keep)?;
            sweep(cfg, data, &mut flip)?;
        }
        current = if bound(cfg, data, &flip) > bound(cfg, data, &keep) { flip } else { keep };
    }
    Ok(current)
}

struct Run {
    state: State,
    trace: Vec<f64>,
    converged: bool,
}

fn run(cfg: &SibpConfig, data: &Data, restart: usize) -> Result<Run> {
    let (n, v) = data.x.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut st = initial_state(cfg, n, v, &mut rng);
    // text-only sweeps first, so features form around word co-occurrence before the
    // (often much more precise) outcome likelihood can lock in a poor configuration
    for _ in 0..cfg.warmup_iter {
        update_loadings(cfg, data, &mut st);
        update_features(data, &mut st, false);
        update_sticks(cfg, &mut st);
    }
    if cfg.warmup_iter > 0 {
        st = orient(cfg, data, st)?;
    }
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for iter in 0..cfg.max_iter {
        sweep(cfg, data, &mut st)?;
        let f = bound(cfg, data, &st);
        if !f.is_finite() {
            return Err(Error::NonFiniteBound { iteration: iter + 1 });
        }
        if let Some(&prev) = trace.last() {
            trace.push(f);
            if ((f - prev) / prev.abs().max(1.0)).abs() < cfg.tolerance {
                converged = true;
                break;
            }
        } else {
            trace.push(f);
        }
    }
    Ok(Run {
        state: st,
        trace,
        converged,
    })
}

/// Fits the model to standardized text features `x` (D x V) and outcomes `y`, keeping the
/// restart with the highest final bound.
pub fn fit_sibp(x: &DMatrix<f64>, y: &[f64], config: &SibpConfig) -> Result<SibpModel> {
    config.validate()?;
    let (n, v) = x.shape();
    if y.len() != n {
        return Err(Error::Misaligned {
            expected: n,
            found: y.len(),
        });
    }
    if config.k_max > n || config.k_max > v {
        return Err(Error::invalid(format!(
            "k_max = {} exceeds the number of documents ({n}) or terms ({v})",
            config.k_max
        )));
    }
    if x.iter().chain(y).any(|a| !a.is_finite()) {
        return Err(Error::invalid("non-finite values in the inputs"));
    }
    let data = Data { x, y };
    let runs: Vec<Result<Run>> = (0..config.restarts).into_par_iter().map(|r| run(config, &data, r)).collect();
    let runs: Vec<Run> = runs.into_iter().collect::<Result<_>>()?;
    let restart_bounds: Vec<f64> = runs.iter().map(|r| *r.trace.last().unwrap_or(&f64::NEG_INFINITY)).collect();
    let best = (0..runs.len())
        .fold(0, |b, i| if restart_bounds[i] > restart_bounds[b] { i } else { b });
    let Run {
        state: st,
        trace,
        converged,
    } = runs.into_iter().nth(best).expect("at least one restart");
    let pi = stick_breaking(
        &st.tau1
            .iter()
            .zip(&st.tau2)
            .map(|(a, b)| a / (a + b))
            .collect::<Vec<_>>(),
    )?;
    Ok(SibpModel {
        config: config.clone(),
        pi,
        tau1: st.tau1,
        tau2: st.tau2,
        a_mean: st.phi,
        a_var: st.big_phi,
        beta_mean: st.m.iter().copied().collect(),
        beta_cov: st.s,
        tau_shape: st.c,
        tau_rate: st.d,
        sigma_n2: st.sigma_n2,
        nu: st.nu,
        bound_trace: trace,
        converged,
        best_restart: best,
        restart_bounds,
    })
}

/// Feature probabilities of new documents from their text alone. There is deliberately no
/// outcome argument: treatments must not depend on the outcomes they will be compared on.
pub fn feature_probabilities(model: &SibpModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.n_terms() {
        return Err(Error::Misaligned {
            expected: model.n_terms(),
            found: x.ncols(),
        });
    }
    let sk = sticks(&model.tau1, &model.tau2);
    let k = model.k();
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            let mut nu = model.pi.clone();
            for _ in 0..500 {
                let before = nu.clone();
                update_document(&xi, &mut nu, &model.a_mean, &model.a_var, model.sigma_n2, &sk, None);
                if nu.iter().zip(&before).all(|(a, b)| (a - b).abs() < 1e-12) {
                    break;
                }
            }
            nu
        })
        .collect();
    Ok(DMatrix::from_fn(x.nrows(), k, |i, j| rows[i][j]))
}

/// Binary treatments of new documents: feature probabilities thresholded at `threshold`.
pub fn infer_treatments(model: &SibpModel, x: &DMatrix<f64>, threshold: f64) -> Result<Vec<TreatmentVector>> {
    let probs = feature_probabilities(model, x)?;
    Ok(probs
        .row_iter()
        .map(|r| {
            let probs: Vec<f64> = r.iter().copied().collect();
            TreatmentVector {
                z: probs.iter().map(|&p| u8::from(p >= threshold)).collect(),
                probs,
            }
        })
        .collect())
}

/// Mean held-out predictive log density of the outcomes given the treatments inferred from
/// the text: Y_i ~ N(z_i m, E[1/tau] + z_i S z_i'), using the Gamma mean for 1/tau.
pub fn model_fit_score(model: &SibpModel, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    if y.len() != x.nrows() {
        return Err(Error::Misaligned {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("no held-out documents"));
    }
    let z = infer_treatments(model, x, 0.5)?;
    let noise = model.tau_rate / model.tau_shape;
    let k = model.k();
    let mut total = 0.0;
    for (zi, &yi) in z.iter().zip(y) {
        let zf: Vec<f64> = zi.z.iter().map(|&b| b as f64).collect();
        let mean: f64 = (0..k).map(|j| zf[j] * model.beta_mean[j]).sum();
        let mut var = noise;
        for a in 0..k {
            for b in 0..k {
                var += zf[a] * zf[b] * model.beta_cov[(a, b)];
            }
        }
        total += -0.5 * (LN_2PI + var.ln() + (yi - mean).powi(2) / var);
    }
    Ok(total / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stick_products() {
        assert_eq!(stick_breaking(&[0.5, 0.5]).unwrap(), vec![0.5, 0.25]);
        assert_eq!(stick_breaking(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(stick_breaking(&[0.0]).is_err());
    }

    #[test]
    fn auxiliary_bound_is_below_the_truth() {
        // Monte Carlo estimate of E[log(1 - v1 v2)]
        use rand_distr::{Beta, Distribution};
        let (t1, t2) = (vec![3.0, 2.0], vec![1.5, 4.0]);
        let sk = sticks(&t1, &t2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b1 = Beta::new(3.0, 1.5).unwrap();
        let b2 = Beta::new(2.0, 4.0).unwrap();
        let n = 200_000;
        let mc: f64 = (0..n)
            .map(|_| (1.0f64 - b1.sample(&mut rng) * b2.sample(&mut rng)).ln())
            .sum::<f64>()
            / n as f64;
        assert!(sk.elog_not_pi[1] <= mc + 1e-3);
        // single stick: exact, E[log(1 - v)] = psi(tau2) - psi(tau1 + tau2)
        assert!((sk.elog_not_pi[0] - (digamma(1.5) - digamma(4.5))).abs() < 1e-12);
    }

    fn small_problem() -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(30, 6, |_, _| rng.gen_range(-1.0..1.0));
        let y = (0..30).map(|i| x[(i, 0)] + 0.1 * rng.gen::<f64>()).collect();
        (x, y)
    }

    #[test]
    fn every_block_update_raises_the_bound() {
        let (x, y) = small_problem();
        let cfg = SibpConfig {
            k_max: 3,
            learn_sigma_n: true,
            ..SibpConfig::default()
        };
        let data = Data { x: &x, y: &y };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut st = initial_state(&cfg, 30, 6, &mut rng);
        let mut f = bound(&cfg, &data, &st);
        for _ in 0..5 {
            let steps: [&dyn Fn(&mut State); 6] = [
                &|s| update_loadings(&cfg, &data, s),
                &|s| update_features(&data, s, true),
                &|s| update_outcome_coefficients(&cfg, &data, s).unwrap(),
                &|s| update_precision(&cfg, &data, s),
                &|s| update_noise(&data, s),
                &|s| update_sticks(&cfg, s),
            ];
            for (i, step) in steps.iter().enumerate() {
                step(&mut st);
                let g = bound(&cfg, &data, &st);
                assert!(g >= f - 1e-8 * f.abs().max(1.0), "step {i}: {f} -> {g}");
                f = g;
            }
        }
    }

    #[test]
    fn same_seed_same_model() {
        let (x, y) = small_problem();
        let cfg = SibpConfig {
            k_max: 2,
            restarts: 3,
            ..SibpConfig::default()
        };
        let a = fit_sibp(&x, &y, &cfg).unwrap();
        let b = fit_sibp(&x, &y, &cfg).unwrap();
        assert_eq!(a.nu, b.nu);
        assert_eq!(a.bound_trace, b.bound_trace);
        for w in a.pi.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn too_many_features() {
        let (x, y) = small_problem();
        let cfg = SibpConfig {
            k_max: 7,
            ..SibpConfig::default()
        };
        assert!(fit_sibp(&x, &y, &cfg).is_err());
    }
}
