//! An analyst who searches many candidate codebooks and reports the most significant one
//! finds effects in pure noise, unless the search and the test use different halves.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::splitter::{split_indices, test_digest, LockState, TestLock};

#[derive(Debug, Clone, Serialize)]
pub struct OverfitConfig {
    pub n_units: usize,
    /// Candidate codebooks searched per replication.
    pub n_noise_gs: usize,
    pub replications: usize,
    pub alpha: f64,
    /// Share of units used for selection in the split branch.
    pub proportion: f64,
    pub seed: u64,
}

impl Default for OverfitConfig {
    fn default() -> Self {
        OverfitConfig {
            n_units: 200,
            n_noise_gs: 50,
            replications: 1000,
            alpha: 0.05,
            proportion: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OverfitReport {
    pub config: OverfitConfig,
    pub same_sample_rate: f64,
    pub same_sample_mc_se: f64,
    pub split_sample_rate: f64,
    pub split_sample_mc_se: f64,
    /// Test locks consumed by the split branch; one per replication.
    pub locks_consumed: usize,
}

/// Two-sided Welch t-test p-value for a difference in means. Degenerate arms give 1.
pub fn welch_p_value(treated: &[f64], control: &[f64]) -> f64 {
    let (n1, n0) = (treated.len() as f64, control.len() as f64);
    if n1 < 2.0 || n0 < 2.0 {
        return 1.0;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
    let (m1, m0) = (mean(treated), mean(control));
    let (a, b) = (var(treated, m1) / n1, var(control, m0) / n0);
    let se2 = a + b;
    if !(se2 > 0.0) {
        return 1.0;
    }
    let t = (m1 - m0) / se2.sqrt();
    let df = se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n0 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

fn p_value_on(units: &[usize], t: &[u8], g: &[f64]) -> f64 {
    let (mut treated, mut control) = (Vec::new(), Vec::new());
    for &i in units {
        if t[i] == 1 {
            treated.push(g[i]);
        } else {
            control.push(g[i]);
        }
    }
    welch_p_value(&treated, &control)
}

/// Index of the candidate with the smallest p-value on `units`, and that p-value.
fn select(units: &[usize], t: &[u8], gs: &[Vec<f64>]) -> (usize, f64) {
    gs.iter()
        .enumerate()
        .map(|(j, g)| (j, p_value_on(units, t, g)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one candidate")
}

struct Replication {
    same: bool,
    split: bool,
    lock: LockState,
}

fn replicate(cfg: &OverfitConfig, rep: usize) -> Result<Replication> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let n = cfg.n_units;
    let mut t: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    t.shuffle(&mut rng);
    // outcomes ignore treatment entirely
    let gs: Vec<Vec<f64>> = (0..cfg.n_noise_gs)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();

    let all: Vec<usize> = (0..n).collect();
    let same = select(&all, &t, &gs).1 < cfg.alpha;

    let strata: Vec<String> = t.iter().map(|x| x.to_string()).collect();
    let split_seed = cfg.seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let (train, test) = split_indices(n, Some(&strata), cfg.proportion, split_seed)?;
    let (chosen, _) = select(&train, &t, &gs);
    let ids: Vec<String> = test.iter().map(|i| format!("u{i}")).collect();
    let digest = test_digest(ids.iter().map(|id| (id.as_str(), "")));
    let lock = TestLock::new(digest.clone());
    let (_, state) = lock.consume(&format!("candidate {chosen}"), &digest, false)?;
    let split = p_value_on(&test, &t, &gs[chosen]) < cfg.alpha;
    Ok(Replication { same, split, lock: state })
}

pub fn overfit_demo(cfg: &OverfitConfig) -> Result<OverfitReport> {
    if cfg.n_units < 8 {
        return Err(Error::invalid("the demo needs at least 8 units"));
    }
    if cfg.n_noise_gs == 0 || cfg.replications == 0 {
        return Err(Error::invalid("need at least one candidate codebook and one replication"));
    }
    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replicate(cfg, r))
        .collect::<Result<_>>()?;
    let r = reps.len() as f64;
    let rate = |f: &dyn Fn(&Replication) -> bool| reps.iter().filter(|x| f(x)).count() as f64 / r;
    let same = rate(&|x| x.same);
    let split = rate(&|x| x.split);
    Ok(OverfitReport {
        config: cfg.clone(),
        same_sample_rate: same,
        same_sample_mc_se: (same * (1.0 - same) / r).sqrt(),
        split_sample_rate: split,
        split_sample_mc_se: (split * (1.0 - split) / r).sqrt(),
        locks_consumed: reps.iter().filter(|x| x.lock == LockState::Valid).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_matches_hand_computation() {
        // means 2 and 5, variances 1 and 1, n = 3 each: t = -3 / sqrt(2/3), df = 4
        let p = welch_p_value(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        let t: f64 = -3.0 / (2.0f64 / 3.0).sqrt();
        let expected = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, 4.0).unwrap().cdf(t.abs()));
        assert!((p - expected).abs() < 1e-14);
        assert_eq!(welch_p_value(&[1.0], &[2.0, 3.0]), 1.0);
        assert_eq!(welch_p_value(&[1.0, 1.0], &[1.0, 1.0]), 1.0);
    }
}
