//! Effect estimation on the test split: average treatment effects on mapped outcome
//! categories, and marginal and interaction effects of latent binary treatments.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::splitter::LockState;

/// Redraws allowed per replicate before the bootstrap gives up.
const MAX_REDRAWS: usize = 1000;
const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimand {
    /// Effect of the experimental treatment on outcome category `k`.
    Ate { k: usize },
    /// Marginal effect of latent feature `k`.
    Amce { k: usize },
    /// Interaction of latent features `k` and `l`.
    Acie { k: usize, l: usize },
}

impl Estimand {
    pub fn kind(&self) -> &'static str {
        match self {
            Estimand::Ate { .. } => "ATE",
            Estimand::Amce { .. } => "AMCE",
            Estimand::Acie { .. } => "ACIE",
        }
    }

    /// 1-based index label used in reports, e.g. `3` or `1:2`.
    pub fn index_label(&self) -> String {
        match self {
            Estimand::Ate { k } | Estimand::Amce { k } => (k + 1).to_string(),
            Estimand::Acie { k, l } => format!("{}:{}", k + 1, l + 1),
        }
    }
}

/// Distribution over the other components that a marginal effect averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Regression adjustment: the sample's own distribution of the other features.
    Empirical,
    /// Equal weight on every combination of the other features (post-stratified cell means).
    Uniform,
}

impl std::str::FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Weighting::Empirical),
            "uniform" => Ok(Weighting::Uniform),
            _ => Err(Error::invalid(format!("unknown weighting '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRequest {
    pub estimand: Estimand,
    pub m: Weighting,
    /// Bootstrap replicates; 0 means analytic uncertainty only.
    pub bootstrap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEstimate {
    pub estimand: Estimand,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Bootstrap replicates behind the interval (0: normal-approximation interval).
    pub b: usize,
    /// Analytic standard error (Neyman for ATE, OLS otherwise).
    pub analytic_se: f64,
    /// Resamples redrawn because an arm or cell was empty.
    pub redrawn: usize,
    pub p_value: f64,
    /// Benjamini-Hochberg adjusted p-value, when requested.
    pub q_value: Option<f64>,
    pub lock_state: LockState,
    pub warnings: Vec<String>,
}

impl CausalEstimate {
    fn analytic(estimand: Estimand, point: f64, se: f64) -> Self {
        let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.5 + CI_LEVEL / 2.0);
        CausalEstimate {
            estimand,
            point,
            se,
            ci_low: point - z * se,
            ci_high: point + z * se,
            b: 0,
            analytic_se: se,
            redrawn: 0,
            p_value: two_sided_p(point, se),
            q_value: None,
            lock_state: LockState::NotApplicable,
            warnings: Vec::new(),
        }
    }

    pub fn with_lock(mut self, state: LockState) -> Self {
        self.lock_state = state;
        self
    }

    fn with_bootstrap(mut self, boot: &BootstrapResult) -> Self {
        self.se = boot.se;
        self.ci_low = boot.ci_low.min(self.point);
        self.ci_high = boot.ci_high.max(self.point);
        if self.ci_low != boot.ci_low || self.ci_high != boot.ci_high {
            self.warnings.push(format!(
                "percentile interval [{}, {}] excluded the point estimate and was widened to contain it",
                boot.ci_low, boot.ci_high
            ));
        }
        self.b = boot.replicates;
        self.redrawn = boot.redrawn;
        self.p_value = two_sided_p(self.point, self.se);
        self
    }
}

fn two_sided_p(point: f64, se: f64) -> f64 {
    if se > 0.0 {
        2.0 * (1.0 - Normal::new(0.0, 1.0).unwrap().cdf((point / se).abs()))
    } else if point == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn check_binary(name: &str, v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|&&x| x != 0.0 && x != 1.0) {
        return Err(Error::invalid(format!("{name} must be 0/1, found {x}")));
    }
    Ok(())
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Difference in means with the Neyman standard error.
fn ate_point(y: &[f64], t: &[f64]) -> Result<(f64, f64)> {
    let treated: Vec<f64> = y.iter().zip(t).filter(|(_, &t)| t == 1.0).map(|(y, _)| *y).collect();
    let control: Vec<f64> = y.iter().zip(t).filter(|(_, &t)| t == 0.0).map(|(y, _)| *y).collect();
    if treated.is_empty() || control.is_empty() {
        return Err(Error::Positivity(format!(
            "{} treated and {} control units; both arms must be non-empty",
            treated.len(),
            control.len()
        )));
    }
    let (m1, v1) = mean_var(&treated);
    let (m0, v0) = mean_var(&control);
    Ok((m1 - m0, (v1 / treated.len() as f64 + v0 / control.len() as f64).sqrt()))
}

/// ATE of a binary treatment `t` on the mapped outcome `y`.
pub fn estimate_ate(y: &[f64], t: &[f64], k: usize, bootstrap_b: usize, seed: u64) -> Result<CausalEstimate> {
    if y.len() != t.len() {
        return Err(Error::Misaligned {
            expected: y.len(),
            found: t.len(),
        });
    }
    check_binary("treatment", t)?;
    let (point, se) = ate_point(y, t)?;
    let est = CausalEstimate::analytic(Estimand::Ate { k }, point, se);
    if bootstrap_b == 0 {
        return Ok(est);
    }
    let boot = bootstrap(y.len(), bootstrap_b, seed, |idx| {
        let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let tb: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        ate_point(&yb, &tb).map(|p| p.0)
    })?;
    Ok(est.with_bootstrap(&boot))
}

/// One ATE per column of `theta` (documents x categories).
pub fn ate_by_category(theta: &DMatrix<f64>, t: &[f64], bootstrap_b: usize, seed: u64) -> Result<Vec<CausalEstimate>> {
    (0..theta.ncols())
        .map(|k| {
            let y: Vec<f64> = theta.column(k).iter().copied().collect();
            estimate_ate(&y, t, k, bootstrap_b, seed)
        })
        .collect()
}

fn feature_column(z: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    if k >= z.ncols() {
        return Err(Error::invalid(format!("feature {k} out of range ({} features)", z.ncols())));
    }
    Ok(z.column(k).iter().copied().collect())
}

fn check_support(z: &DMatrix<f64>, k: usize) -> Result<()> {
    let col = feature_column(z, k)?;
    let on = col.iter().filter(|&&x| x == 1.0).count();
    if on == 0 || on == col.len() {
        return Err(Error::CommonSupport(format!(
            "feature {} is {} in every document",
            k + 1,
            if on == 0 { "absent" } else { "present" }
        )));
    }
    Ok(())
}

fn cell_label(names: &[usize], values: &[u8]) -> String {
    let parts: Vec<String> = names.iter().zip(values).map(|(k, v)| format!("z{}={v}", k + 1)).collect();
    format!("({})", parts.join(", "))
}

/// Feature combinations (over all features) that never occur; only checked for K <= 12.
pub fn unobserved_combinations(z: &DMatrix<f64>) -> Vec<String> {
    let k = z.ncols();
    if k > 12 {
        return Vec::new();
    }
    let mut seen = vec![false; 1 << k];
    for r in z.row_iter() {
        let code = r.iter().enumerate().fold(0usize, |c, (j, &x)| c | ((x == 1.0) as usize) << j);
        seen[code] = true;
    }
    let names: Vec<usize> = (0..k).collect();
    (0..1usize << k)
        .filter(|&c| !seen[c])
        .map(|c| {
            let vals: Vec<u8> = (0..k).map(|j| ((c >> j) & 1) as u8).collect();
            cell_label(&names, &vals)
        })
        .collect()
}

/// Mean, sampling variance of the mean, and size of each cell of the listed features
/// (cell code: bit j = value of `features[j]`); None for empty cells.
fn cell_stats(y: &[f64], z: &DMatrix<f64>, rows: &[usize], features: &[usize]) -> Vec<Option<(f64, f64)>> {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 1 << features.len()];
    for &i in rows {
        let code = features
            .iter()
            .enumerate()
            .fold(0usize, |c, (j, &f)| c | ((z[(i, f)] == 1.0) as usize) << j);
        groups[code].push(y[i]);
    }
    groups
        .iter()
        .map(|g| {
            (!g.is_empty()).then(|| {
                let (m, v) = mean_var(g);
                (m, v / g.len() as f64)
            })
        })
        .collect()
}

fn bits(code: usize, width: usize) -> Vec<u8> {
    (0..width).map(|j| ((code >> j) & 1) as u8).collect()
}

/// Equally weighted average over the combinations of the remaining features of a contrast
/// of cell means. `contrast` lists (cell offset within the leading features, sign).
fn post_stratified(
    y: &[f64],
    z: &DMatrix<f64>,
    rows: &[usize],
    leading: &[usize],
    contrast: &[(usize, f64)],
) -> Result<(f64, f64)> {
    let mut features = leading.to_vec();
    features.extend((0..z.ncols()).filter(|j| !leading.contains(j)));
    let stats = cell_stats(y, z, rows, &features);
    let width = leading.len();
    let n_strata = 1usize << (features.len() - width);
    let mut total = 0.0;
    let mut var = 0.0;
    for c in 0..n_strata {
        for &(offset, sign) in contrast {
            let code = (c << width) | offset;
            let (m, v) = stats[code].ok_or_else(|| Error::MissingCell(cell_label(&features, &bits(code, features.len()))))?;
            total += sign * m;
            var += v;
        }
    }
    let c = n_strata as f64;
    Ok((total / c, var.sqrt() / c))
}

/// Regression of y on an intercept, the features and optionally the k x l product.
/// Returns the coefficient of `target` (a column of the regressor matrix) and its OLS SE.
fn regression_effect(y: &[f64], z: &DMatrix<f64>, rows: &[usize], interaction: Option<(usize, usize)>) -> Result<(DVector<f64>, DVector<f64>)> {
    let k = z.ncols();
    let p = 1 + k + usize::from(interaction.is_some());
    let n = rows.len();
    let x = DMatrix::from_fn(n, p, |r, c| {
        let i = rows[r];
        match c {
            0 => 1.0,
            c if c <= k => z[(i, c - 1)],
            _ => {
                let (a, b) = interaction.expect("interaction column");
                z[(i, a)] * z[(i, b)]
            }
        }
    });
    let yv = DVector::from_iterator(n, rows.iter().map(|&i| y[i]));
    let (coef, inv) = least_squares(&x, &yv, 0.0, p)?;
    let resid = &yv - &x * &coef;
    let dof = n.saturating_sub(p).max(1) as f64;
    let s2 = resid.norm_squared() / dof;
    let se = DVector::from_fn(p, |j, _| (s2 * inv[(j, j)]).max(0.0).sqrt());
    Ok((coef, se))
}

fn amce_point(y: &[f64], z: &DMatrix<f64>, rows: &[usize], k: usize, m: Weighting) -> Result<(f64, f64)> {
    let on = rows.iter().filter(|&&i| z[(i, k)] == 1.0).count();
    if on == 0 || on == rows.len() {
        return Err(Error::CommonSupport(format!("feature {} is constant", k + 1)));
    }
    match m {
        Weighting::Empirical => {
            let (coef, se) = regression_effect(y, z, rows, None)?;
            Ok((coef[k + 1], se[k + 1]))
        }
        Weighting::Uniform => post_stratified(y, z, rows, &[k], &[(1, 1.0), (0, -1.0)]),
    }
}

fn acie_point(y: &[f64], z: &DMatrix<f64>, rows: &[usize], k: usize, l: usize, m: Weighting) -> Result<(f64, f64)> {
    let pair = cell_stats(y, z, rows, &[k, l]);
    if let Some(c) = pair.iter().position(Option::is_none) {
        return Err(Error::MissingCell(cell_label(&[k, l], &bits(c, 2))));
    }
    match m {
        Weighting::Empirical => {
            let (coef, se) = regression_effect(y, z, rows, Some((k, l)))?;
            let j = z.ncols() + 1;
            Ok((coef[j], se[j]))
        }
        // (z_k, z_l) cells: 11 - 01 - 10 + 00, bit 0 = z_k
        Weighting::Uniform => post_stratified(y, z, rows, &[k, l], &[(3, 1.0), (2, -1.0), (1, -1.0), (0, 1.0)]),
    }
}

fn check_inputs(y: &[f64], z: &DMatrix<f64>) -> Result<()> {
    if y.len() != z.nrows() {
        return Err(Error::Misaligned {
            expected: z.nrows(),
            found: y.len(),
        });
    }
    check_binary("features", z.as_slice())
}

fn finish(
    estimand: Estimand,
    point: f64,
    se: f64,
    n: usize,
    req_b: usize,
    seed: u64,
    stat: impl Fn(&[usize]) -> Result<f64> + Sync,
) -> Result<CausalEstimate> {
    let est = CausalEstimate::analytic(estimand, point, se);
    if req_b == 0 {
        return Ok(est);
    }
    let boot = bootstrap(n, req_b, seed, stat)?;
    Ok(est.with_bootstrap(&boot))
}

/// Average marginal component effect of feature `k` (0-based).
pub fn estimate_amce(y: &[f64], z: &DMatrix<f64>, k: usize, m: Weighting, bootstrap_b: usize, seed: u64) -> Result<CausalEstimate> {
    check_inputs(y, z)?;
    check_support(z, k)?;
    let rows: Vec<usize> = (0..y.len()).collect();
    let (point, se) = amce_point(y, z, &rows, k, m)?;
    let mut est = finish(Estimand::Amce { k }, point, se, y.len(), bootstrap_b, seed, |idx| {
        amce_point(y, z, idx, k, m).map(|p| p.0)
    })?;
    let missing = unobserved_combinations(z);
    if !missing.is_empty() {
        let msg = format!("unobserved feature combinations: {}", missing.join(" "));
        log::warn!("{msg}");
        est.warnings.push(msg);
    }
    Ok(est)
}

/// Average component interaction effect of features `k` and `l` (0-based).
pub fn estimate_acie(y: &[f64], z: &DMatrix<f64>, k: usize, l: usize, m: Weighting, bootstrap_b: usize, seed: u64) -> Result<CausalEstimate> {
    check_inputs(y, z)?;
    if k == l {
        return Err(Error::invalid("an interaction needs two distinct features"));
    }
    feature_column(z, k)?;
    feature_column(z, l)?;
    let rows: Vec<usize> = (0..y.len()).collect();
    let (point, se) = acie_point(y, z, &rows, k, l, m)?;
    finish(Estimand::Acie { k, l }, point, se, y.len(), bootstrap_b, seed, |idx| {
        acie_point(y, z, idx, k, l, m).map(|p| p.0)
    })
}

/// Runs one request against outcomes `y` and either a binary treatment (ATE) or a feature
/// matrix (AMCE, ACIE).
pub fn estimate(req: &EffectRequest, y: &[f64], treatment: Option<&[f64]>, z: Option<&DMatrix<f64>>) -> Result<CausalEstimate> {
    match req.estimand {
        Estimand::Ate { k } => {
            let t = treatment.ok_or_else(|| Error::invalid("an ATE needs the treatment column"))?;
            estimate_ate(y, t, k, req.bootstrap, req.seed)
        }
        Estimand::Amce { k } => {
            let z = z.ok_or_else(|| Error::invalid("an AMCE needs the feature matrix"))?;
            estimate_amce(y, z, k, req.m, req.bootstrap, req.seed)
        }
        Estimand::Acie { k, l } => {
            let z = z.ok_or_else(|| Error::invalid("an ACIE needs the feature matrix"))?;
            estimate_acie(y, z, k, l, req.m, req.bootstrap, req.seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates: usize,
    pub redrawn: usize,
}

fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::Positivity(_) | Error::CommonSupport(_) | Error::MissingCell(_) | Error::RankDeficient(_)
    )
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Nonparametric bootstrap over `n` units. Replicate `b` draws from its own random stream,
/// so results do not depend on scheduling. Resamples on which the statistic reports an
/// empty arm or cell are redrawn.
pub fn bootstrap(n: usize, b: usize, seed: u64, stat: impl Fn(&[usize]) -> Result<f64> + Sync) -> Result<BootstrapResult> {
    if b == 0 {
        return Err(Error::invalid("bootstrap needs B >= 1; use the analytic standard error instead"));
    }
    if n == 0 {
        return Err(Error::invalid("bootstrap needs at least one unit"));
    }
    let draws: Vec<Result<(f64, usize)>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let mut idx = vec![0usize; n];
            for redraws in 0..=MAX_REDRAWS {
                idx.iter_mut().for_each(|i| *i = rng.gen_range(0..n));
                match stat(&idx) {
                    Ok(v) => return Ok((v, redraws)),
                    Err(e) if is_degenerate(&e) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::invalid(format!(
                "bootstrap replicate {rep}: {MAX_REDRAWS} resamples in a row were degenerate"
            )))
        })
        .collect();
    let mut values = Vec::with_capacity(b);
    let mut redrawn = 0;
    for d in draws {
        let (v, r) = d?;
        values.push(v);
        redrawn += r;
    }
    let (mean, _) = mean_var(&values);
    let se = if b > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64).sqrt()
    } else {
        0.0
    };
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - CI_LEVEL) / 2.0;
    Ok(BootstrapResult {
        se,
        ci_low: quantile(&values, alpha),
        ci_high: quantile(&values, 1.0 - alpha),
        replicates: b,
        redrawn,
    })
}

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    q
}

/// Fills `q_value` of every estimate with the BH adjustment across the set.
pub fn adjust_fdr(estimates: &mut [CausalEstimate]) {
    let p: Vec<f64> = estimates.iter().map(|e| e.p_value).collect();
    for (e, q) in estimates.iter_mut().zip(benjamini_hochberg(&p)) {
        e.q_value = Some(q);
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "estimand", "k", "label", "point", "se", "ci_low", "ci_high", "B", "lock_state", "p_value", "q_value",
];

/// Writes the effect table; `labels[i]` names estimate i.
pub fn write_effects_csv(path: &Path, estimates: &[CausalEstimate], labels: &[String]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER)?;
    for (e, label) in estimates.iter().zip(labels) {
        w.write_record([
            e.estimand.kind().to_string(),
            e.estimand.index_label(),
            label.clone(),
            e.point.to_string(),
            e.se.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            e.b.to_string(),
            e.lock_state.to_string(),
            e.p_value.to_string(),
            e.q_value.map(|q| q.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Horizontal dot-and-whisker plot: one row per estimate, zero line dashed.
pub fn effects_svg(estimates: &[CausalEstimate], labels: &[String], title: &str) -> String {
    let row_h = 28.0;
    let left = 220.0;
    let width = 640.0;
    let plot_w = width - left - 30.0;
    let height = 60.0 + row_h * estimates.len() as f64;
    let lo = estimates.iter().map(|e| e.ci_low).fold(0.0f64, f64::min);
    let hi = estimates.iter().map(|e| e.ci_high).fold(0.0f64, f64::max);
    let pad = ((hi - lo) * 0.05).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |v: f64| left + (v - lo) / (hi - lo) * plot_w;
    let esc = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!("<text x=\"{}\" y=\"20\" font-size=\"14\">{}</text>\n", left, esc(title)));
    s.push_str(&format!(
        "<line x1=\"{0:.2}\" y1=\"30\" x2=\"{0:.2}\" y2=\"{1:.2}\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n",
        x(0.0),
        height - 25.0
    ));
    for (i, (e, label)) in estimates.iter().zip(labels).enumerate() {
        let y = 45.0 + row_h * i as f64;
        s.push_str(&format!("<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n", left - 10.0, y + 4.0, esc(label)));
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
            x(e.ci_low),
            x(e.ci_high)
        ));
        s.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"black\"/>\n", x(e.point)));
    }
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\">{lo:.3}</text><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{hi:.3}</text>\n",
        left,
        height - 8.0,
        left + plot_w,
        height - 8.0
    ));
    s.push_str("</svg>\n");
    s
}

pub fn write_effects_svg(path: &Path, estimates: &[CausalEstimate], labels: &[String], title: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(effects_svg(estimates, labels, title).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_in_means() {
        let e = estimate_ate(&[0.8, 0.6, 0.2, 0.4], &[1.0, 1.0, 0.0, 0.0], 0, 0, 0).unwrap();
        assert!((e.point - 0.4).abs() < 1e-12);
        assert!(e.ci_low <= e.point && e.point <= e.ci_high);
    }

    #[test]
    fn empty_arm_is_a_positivity_error() {
        assert!(matches!(estimate_ate(&[1.0, 2.0], &[1.0, 1.0], 0, 0, 0), Err(Error::Positivity(_))));
    }

    #[test]
    fn null_effect_covers_zero() {
        let y = [0.3, 0.5, 0.3, 0.5];
        let e = estimate_ate(&y, &[1.0, 1.0, 0.0, 0.0], 0, 200, 3).unwrap();
        assert_eq!(e.point, 0.0);
        assert!(e.ci_low <= 0.0 && 0.0 <= e.ci_high);
    }

    #[test]
    fn bootstrap_contract() {
        assert!(bootstrap(5, 0, 1, |_| Ok(1.0)).is_err());
        let c = bootstrap(5, 50, 1, |_| Ok(2.5)).unwrap();
        assert_eq!((c.ci_low, c.ci_high, c.se), (2.5, 2.5, 0.0));
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mean = |idx: &[usize]| Ok(idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64);
        assert_eq!(bootstrap(20, 100, 9, mean).unwrap(), bootstrap(20, 100, 9, mean).unwrap());
    }

    #[test]
    fn bh_adjustment() {
        let q = benjamini_hochberg(&[0.01, 0.04, 0.03, 0.5]);
        let expect = [0.04, 0.16 / 3.0, 0.16 / 3.0, 0.5];
        for (a, b) in q.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{q:?}");
        }
    }

    #[test]
    fn single_feature_amce_is_difference_in_means() {
        let z = DMatrix::from_column_slice(6, 1, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let y = [3.0, 4.0, 2.0, 1.0, 0.0, 2.0];
        let a = estimate_amce(&y, &z, 0, Weighting::Empirical, 0, 0).unwrap();
        let d = estimate_ate(&y, z.as_slice(), 0, 0, 0).unwrap();
        assert!((a.point - d.point).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_violates_support() {
        let z = DMatrix::from_element(4, 2, 1.0);
        assert!(matches!(
            estimate_amce(&[1.0, 2.0, 3.0, 4.0], &z, 0, Weighting::Empirical, 0, 0),
            Err(Error::CommonSupport(_))
        ));
    }

    #[test]
    fn missing_cell_is_named() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        match estimate_acie(&[1.0, 0.0, 0.0], &z, 0, 1, Weighting::Empirical, 0, 0) {
            Err(Error::MissingCell(c)) => assert_eq!(c, "(z1=0, z2=1)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn svg_has_one_segment_per_estimate() {
        let e = estimate_ate(&[0.8, 0.6, 0.2, 0.4], &[1.0, 1.0, 0.0, 0.0], 0, 0, 0).unwrap();
        let svg = effects_svg(&[e.clone(), e], &["a".into(), "b<c".into()], "t");
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }
}
