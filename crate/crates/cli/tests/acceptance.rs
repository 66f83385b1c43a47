//! Acceptance run: every criterion prints one PASS/FAIL line, then a summary in order.
//! Criteria 1 and 3 are judged on the evidence gathered by all the others.
//!
//! `TEXTCAUSE_ACCEPTANCE_ONLY=2,4` limits the run while developing; a limited run never
//! reports success.

use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use textcause::causal::{ate_by_category, estimate_acie, estimate_amce, estimate_ate, Weighting};
use textcause::corpus::{standardize, Corpus, Dtm};
use textcause::lab::{
    enumerate_aisv, fit_reference, overfit_demo, run_stability, DesignKind, OverfitConfig, PotentialOutcomeTable,
    StabilityConfig, StartMode,
};
use textcause::matching::{match_topics, MatchMethod};
use textcause::sibp::{fit_sibp, infer_treatments, model_fit_score, SibpConfig};
use textcause::splitter::{split, LockState};
use textcause::stm::{averaged_prior, estep_objective, fit_matrix, fit_new_documents, PriorMode, StmConfig};
use textcause::synth::{
    dirichlet_rows, immigration_corpus, planted_features, potential_proportions, simulate_stm, text_population,
    StmSimSpec,
};

const BIN: &str = env!("CARGO_BIN_EXE_textcause");
const BOUND_SLACK: f64 = 1e-6;

/// θ rows and evidence-bound traces seen during the run.
#[derive(Default)]
struct Evidence {
    theta_rows: usize,
    theta_bad: usize,
    theta_worst: f64,
    theta_sources: usize,
    fits: usize,
    bound_bad: Vec<String>,
}

impl Evidence {
    fn theta(&mut self, theta: &DMatrix<f64>) {
        self.theta_sources += 1;
        for r in theta.row_iter() {
            let neg = r.iter().fold(0.0f64, |a, &x| a.min(x));
            let dev = (r.sum() - 1.0).abs().max(-neg);
            self.theta_worst = self.theta_worst.max(dev);
            self.theta_rows += 1;
            if dev > 1e-8 || r.iter().any(|x| !x.is_finite()) {
                self.theta_bad += 1;
            }
        }
    }

    /// A bound may not fall by more than the slack between consecutive iterations.
    fn bound(&mut self, what: &str, trace: &[f64]) {
        self.fits += 1;
        let worst = trace.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::min);
        self.step(what, worst);
    }

    fn step(&mut self, what: &str, worst: f64) {
        if worst < -BOUND_SLACK {
            self.bound_bad.push(format!("{what}: step {worst:.3e}"));
        }
    }
}

thread_local! {
    static EVIDENCE: RefCell<Evidence> = RefCell::new(Evidence::default());
}

fn evidence<T>(f: impl FnOnce(&mut Evidence) -> T) -> T {
    EVIDENCE.with(|e| f(&mut e.borrow_mut()))
}

/// (passed, detail)
type Outcome = (bool, String);

fn covariate_config(k: usize) -> StmConfig {
    let mut c = StmConfig::with_k(k);
    c.prevalence = vec!["x".into()];
    c
}

fn c2_recovery() -> Outcome {
    let mut good = 0;
    let mut worst = Vec::new();
    for seed in 0..10 {
        let sim = simulate_stm(&StmSimSpec::new(3, 50, 500, 1.0), "x", seed).unwrap();
        let model = fit_matrix(&sim.dtm, &sim.design, &covariate_config(3), None).unwrap();
        evidence(|e| {
            e.theta(&model.theta());
            e.bound(&format!("recovery seed {seed}"), &model.bound_trace);
        });
        let sims = match_topics(&sim.beta, &model.beta, &[0, 1, 2], MatchMethod::Hungarian).unwrap();
        let min = sims.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        worst.push(format!("{min:.3}"));
        if min >= 0.90 {
            good += 1;
        }
    }
    (good >= 9, format!("{good}/10 seeds with every topic >= 0.90; weakest per seed [{}]", worst.join(", ")))
}

fn c4_gradient() -> Outcome {
    let (k, v) = (5, 30);
    let m = k - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let beta = dirichlet_rows(k, v, 0.5, &mut rng);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut row: Vec<(u32, u32)> = Vec::new();
        for w in 0..v as u32 {
            if rng.gen_bool(0.4) {
                row.push((w, rng.gen_range(1..6)));
            }
        }
        if row.is_empty() {
            row.push((0, 3));
        }
        let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let sigma_inv = &a * a.transpose() + DMatrix::identity(m, m);
        let eta: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, grad) = estep_objective(&row, &beta, &mu, &sigma_inv, &eta);
        let h = 1e-5;
        let fd: Vec<f64> = (0..m)
            .map(|j| {
                let mut up = eta.clone();
                let mut down = eta.clone();
                up[j] += h;
                down[j] -= h;
                (estep_objective(&row, &beta, &mu, &sigma_inv, &up).0 - estep_objective(&row, &beta, &mu, &sigma_inv, &down).0)
                    / (2.0 * h)
            })
            .collect();
        let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = fd.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(diff / scale);
    }
    (worst < 1e-3, format!("largest relative gradient error over 10 documents {worst:.2e}"))
}

fn c5_averaged_prior() -> Outcome {
    let sim = simulate_stm(&StmSimSpec::new(4, 40, 300, 1.0), "x", 8).unwrap();
    let model = fit_matrix(&sim.dtm, &sim.design, &covariate_config(4), None).unwrap();
    evidence(|e| {
        e.theta(&model.theta());
        e.bound("averaged prior fit", &model.bound_trace);
    });
    let prior = averaged_prior(&model).unwrap();
    let (d, m) = model.eta.shape();
    let mut mu_tilde = vec![0.0; m];
    for i in 0..d {
        for j in 0..m {
            mu_tilde[j] += model.mu[(i, j)] / d as f64;
        }
    }
    let mut expected = model.sigma.clone();
    for i in 0..d {
        for a in 0..m {
            for b in 0..m {
                expected[(a, b)] -= (model.eta[(i, a)] - model.mu[(i, a)]) * (model.eta[(i, b)] - model.mu[(i, b)]);
                expected[(a, b)] += (model.eta[(i, a)] - mu_tilde[a]) * (model.eta[(i, b)] - mu_tilde[b]);
            }
        }
    }
    let sigma_err = (&prior.raw_sigma - &expected).amax();
    let mu_err = prior.mu.iter().zip(&mu_tilde).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let err = sigma_err.max(mu_err);
    (err < 1e-10, format!("max |difference| {err:.2e} (covariance {sigma_err:.2e}, mean {mu_err:.2e})"))
}

fn c6_aisv() -> Outcome {
    let r = enumerate_aisv(&PotentialOutcomeTable::stylized(), DesignKind::Balanced).unwrap();
    let mut problems = Vec::new();
    if r.distinct_category_sets.len() != 3 {
        problems.push(format!("{} category sets", r.distinct_category_sets.len()));
    }
    let want = [
        vec!["Candidate Morals", "Immigration"],
        vec!["Candidate Morals", "Immigration", "Polarization", "Taxes"],
        vec!["Polarization", "Taxes"],
    ];
    for w in &want {
        if !r.distinct_category_sets.iter().any(|s| s == w) {
            problems.push(format!("missing {w:?}"));
        }
    }
    let first = r.witnesses.first();
    let witness_ok = r.unstable
        && first.is_some_and(|w| w.unit == 0 && r.randomizations[w.a] == [1, 1, 0, 0] && r.randomizations[w.b] == [1, 0, 1, 0])
        && r.witnesses.iter().all(|w| {
            r.randomizations[w.a][w.unit] == r.randomizations[w.b][w.unit]
                && r.discoveries[w.a].mapped_value(w.unit) != r.discoveries[w.b].mapped_value(w.unit)
        });
    if !witness_ok {
        problems.push("witnesses".into());
    }
    let same = PotentialOutcomeTable::binary(&[("a", "Economy", "Economy"), ("b", "Economy", "Economy"), ("c", "Economy", "Economy"), ("d", "Economy", "Economy")]);
    for design in [DesignKind::Balanced, DesignKind::All] {
        let s = enumerate_aisv(&same, design).unwrap();
        if s.unstable || !s.witnesses.is_empty() {
            problems.push(format!("identical table unstable under {design:?}"));
        }
    }
    (
        problems.is_empty(),
        format!(
            "{} randomizations, {} category sets, {} witnesses (first: unit 1, 1100 vs 1010); identical table stable{}",
            r.randomizations.len(),
            r.distinct_category_sets.len(),
            r.witnesses.len(),
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join("; ")) }
        ),
    )
}

fn c7_identification() -> Outcome {
    let (k, v, n) = (4, 60, 400);
    let beta = dirichlet_rows(k, v, 0.1, &mut ChaCha8Rng::seed_from_u64(70));
    let mut discovery = StmSimSpec::new(k, v, 1000, 1.0);
    discovery.beta = Some(beta.clone());
    let sim = simulate_stm(&discovery, "x", 71).unwrap();
    let model = fit_matrix(&sim.dtm, &sim.design, &covariate_config(k), None).unwrap();
    evidence(|e| {
        e.theta(&model.theta());
        e.bound("identification discovery fit", &model.bound_trace);
    });

    let mut spec = StmSimSpec::new(k, v, n, 1.0);
    spec.beta = Some(beta);
    let pop = text_population(&spec, 72).unwrap();
    let theta0 = fit_new_documents(&model, &pop.control, PriorMode::Average, None).unwrap().theta;
    let theta1 = fit_new_documents(&model, &pop.treated, PriorMode::Average, None).unwrap().theta;
    evidence(|e| {
        e.theta(&theta0);
        e.theta(&theta1);
    });
    let oracle: Vec<f64> = (0..k).map(|j| (0..n).map(|i| theta1[(i, j)] - theta0[(i, j)]).sum::<f64>() / n as f64).collect();

    let reps = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let mut arms: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let mut draws = vec![Vec::with_capacity(reps); k];
    for _ in 0..reps {
        arms.shuffle(&mut rng);
        let rows: Vec<Vec<(u32, u32)>> = (0..n)
            .map(|i| if arms[i] == 1.0 { pop.treated.row(i) } else { pop.control.row(i) }.to_vec())
            .collect();
        let observed = Dtm::from_rows(v, rows).unwrap();
        let theta = fit_new_documents(&model, &observed, PriorMode::Average, None).unwrap().theta;
        evidence(|e| e.theta(&theta));
        for (j, est) in ate_by_category(&theta, &arms, 0, 0).unwrap().into_iter().enumerate() {
            draws[j].push(est.point);
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for j in 0..k {
        let mean = draws[j].iter().sum::<f64>() / reps as f64;
        let var = draws[j].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        let z = (mean - oracle[j]).abs() / se;
        ok &= z < 3.0;
        parts.push(format!("topic {}: mean {mean:.4} oracle {:.4} ({z:.2} SE)", j + 1, oracle[j]));
    }
    (ok, parts.join("; "))
}

fn c8_overfit() -> Outcome {
    let r = overfit_demo(&OverfitConfig::default()).unwrap();
    let null_se = (0.05f64 * 0.95 / r.config.replications as f64).sqrt();
    let se = r.same_sample_mc_se.max(null_se);
    let same_ok = r.same_sample_rate > 0.05 + 3.0 * se;
    let split_ok = (0.03..=0.07).contains(&r.split_sample_rate);
    (
        same_ok && split_ok && r.locks_consumed == r.config.replications,
        format!(
            "same-sample rate {:.3} (threshold {:.3}), split-sample rate {:.3}, {} replications, {} locks consumed",
            r.same_sample_rate,
            0.05 + 3.0 * se,
            r.split_sample_rate,
            r.config.replications,
            r.locks_consumed
        ),
    )
}

fn c9_sibp() -> Outcome {
    let planted = planted_features(500, 10, 20, &[2.0, -1.0], 0.1, 3.0, 11);
    let std = standardize(&planted.x);
    let config = SibpConfig {
        k_max: 2,
        ..SibpConfig::default()
    };
    let model = fit_sibp(&std.matrix, &planted.y, &config).unwrap();
    evidence(|e| e.bound("planted features", &model.bound_trace));
    let z: Vec<Vec<u8>> = infer_treatments(&model, &std.matrix, 0.5).unwrap().into_iter().map(|t| t.z).collect();
    let acc = |fitted: usize, truth: usize| {
        (0..z.len()).filter(|&i| z[i][fitted] as f64 == planted.z[(i, truth)]).count() as f64 / z.len() as f64
    };
    let matched = if acc(0, 0) + acc(1, 1) >= acc(1, 0) + acc(0, 1) { [0, 1] } else { [1, 0] };
    let accuracy = [acc(matched[0], 0), acc(matched[1], 1)];
    let signs = model.beta_mean[matched[0]] > 0.0 && model.beta_mean[matched[1]] < 0.0;

    let test = planted_features(200, 10, 20, &[2.0, -1.0], 0.1, 3.0, 77);
    let x = std.standardization.apply(&test.x).unwrap();
    let before = infer_treatments(&model, &x, 0.5).unwrap();
    let mut identical = true;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut y = test.y.clone();
        y.shuffle(&mut rng);
        model_fit_score(&model, &x, &y).unwrap();
        identical &= infer_treatments(&model, &x, 0.5).unwrap() == before;
    }
    (
        accuracy.iter().all(|&a| a >= 0.9) && signs && identical,
        format!(
            "accuracy {:.3}/{:.3}, coefficients {:+.3}/{:+.3} (planted +2/-1), Z identical under 20 outcome permutations: {identical}",
            accuracy[0], accuracy[1], model.beta_mean[matched[0]], model.beta_mean[matched[1]]
        ),
    )
}

fn c10_saturated() -> Outcome {
    let cells = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];
    let z = DMatrix::from_fn(12, 2, |i, j| if j == 0 { cells[i % 4].0 } else { cells[i % 4].1 });
    let additive: Vec<f64> = z.row_iter().map(|r| 2.0 * r[0] + r[1]).collect();
    let product: Vec<f64> = z.row_iter().map(|r| r[0] * r[1]).collect();
    let mut worst: f64 = 0.0;
    for m in [Weighting::Empirical, Weighting::Uniform] {
        let amce1 = estimate_amce(&additive, &z, 0, m, 0, 0).unwrap().point;
        let amce2 = estimate_amce(&additive, &z, 1, m, 0, 0).unwrap().point;
        let acie0 = estimate_acie(&additive, &z, 0, 1, m, 0, 0).unwrap().point;
        let acie1 = estimate_acie(&product, &z, 0, 1, m, 0, 0).unwrap().point;
        for (got, want) in [(amce1, 2.0), (amce2, 1.0), (acie0, 0.0), (acie1, 1.0)] {
            worst = worst.max((got - want).abs());
        }
    }
    (worst < 1e-12, format!("AMCE_1 = 2, AMCE_2 = 1, ACIE = 0 and 1 under both weightings; max error {worst:.1e}"))
}

fn c11_coverage() -> Outcome {
    let spec = StmSimSpec::new(3, 10, 1_000_000, 1.0);
    let (c, t) = potential_proportions(&spec, &mut ChaCha8Rng::seed_from_u64(110)).unwrap();
    let truth = (0..spec.d).map(|i| t[(i, 0)] - c[(i, 0)]).sum::<f64>() / spec.d as f64;
    drop((c, t));
    let n = 200;
    let sample = StmSimSpec::new(3, 10, n, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut covered = 0;
    for rep in 0..100 {
        let (c, t) = potential_proportions(&sample, &mut rng).unwrap();
        let mut arms: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        arms.shuffle(&mut rng);
        let y: Vec<f64> = (0..n).map(|i| if arms[i] == 1.0 { t[(i, 0)] } else { c[(i, 0)] }).collect();
        let e = estimate_ate(&y, &arms, 0, 1000, 1000 + rep).unwrap();
        if e.ci_low <= truth && truth <= e.ci_high {
            covered += 1;
        }
    }
    ((93..=97).contains(&covered), format!("{covered}/100 intervals cover the oracle ATE {truth:.4} (n = {n}, B = 1000)"))
}

fn c12_stability() -> Outcome {
    let mut spec = StmSimSpec::new(20, 400, 13_000, 0.5);
    spec.mean_doc_len = 50.0;
    let sim = simulate_stm(&spec, "x", 120).unwrap();
    let stm = covariate_config(20);
    let reference = fit_reference(&sim.dtm, &sim.design, &stm).unwrap();
    evidence(|e| {
        e.theta(&reference.theta());
        e.bound("stability reference", &reference.bound_trace);
    });
    let mut dispersion = Vec::new();
    for mode in [StartMode::WarmOracle, StartMode::ColdSpectral] {
        let mut cfg = StabilityConfig::new(stm.clone(), "x");
        cfg.sample_sizes = vec![5000];
        cfg.n_reps = 100;
        cfg.mode = mode;
        cfg.seed = 121;
        let r = run_stability(&sim.dtm, &sim.design, &reference, &cfg).unwrap();
        evidence(|e| {
            for rep in 0..cfg.n_reps {
                let worst = r.rows.iter().filter(|x| x.rep == rep).map(|x| x.min_bound_step).fold(0.0, f64::min);
                e.fits += 1;
                e.step(&format!("stability {mode:?} rep {rep}"), worst);
            }
        });
        dispersion.push(r.theta_dispersion(5000));
    }
    (
        dispersion[0] <= dispersion[1],
        format!("θ-mean dispersion at n = 5000 over 100 reps: warm oracle {:.5}, cold spectral {:.5}", dispersion[0], dispersion[1]),
    )
}

fn c13_lock() -> Outcome {
    let mut problems = Vec::new();

    // library
    let corpus = Corpus::new(immigration_corpus(40, 1.0, 3), None).unwrap();
    let (assignment, lock) = split(&corpus, 0.5, None, 1).unwrap();
    let digest = assignment.digest_for(&corpus).unwrap();
    let (used, state) = lock.consume("first", &digest, false).unwrap();
    let test = assignment.test_positions(&corpus).unwrap();
    let y: Vec<f64> = test.iter().map(|&i| corpus.documents[i].outcome.unwrap()).collect();
    let t: Vec<f64> = test.iter().map(|&i| corpus.documents[i].treatment.unwrap()).collect();
    let est = estimate_ate(&y, &t, 0, 0, 0).unwrap().with_lock(state);
    if state != LockState::Valid || est.lock_state != LockState::Valid {
        problems.push(format!("library estimate carries {:?}", est.lock_state));
    }
    match used.consume("second", &digest, false) {
        Err(e) if e.to_string().contains("test set already used") => {}
        other => problems.push(format!("library double consumption gave {other:?}")),
    }

    // command line
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |args: &[&str]| Command::new(BIN).current_dir(d).args(args).output().unwrap();
    for args in [
        &["synth", "--kind", "immigration", "--n", "200", "--seed", "13", "--out", "syn"][..],
        &["ingest", "--input", "syn/corpus.jsonl", "--out", "ing"],
        &["split", "--corpus", "ing/corpus.json", "--seed", "1", "--out", "sp"],
        &["fit-stm", "--corpus", "ing/corpus.json", "--split", "sp/split.json", "--k", "4", "--prevalence", "treatment", "--out", "stm"],
    ] {
        let out = run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let estimate = ["estimate", "--model", "stm/model.json", "--corpus", "ing/corpus.json", "--split", "sp/split.json", "--bootstrap", "100"];
    let first = run(&[&estimate[..], &["--out", "est"]].concat());
    if !first.status.success() {
        problems.push(format!("first estimate failed: {}", String::from_utf8_lossy(&first.stderr)));
    } else {
        let states: Vec<String> = csv::Reader::from_path(d.join("est/effects.csv"))
            .unwrap()
            .records()
            .map(|r| r.unwrap()[8].to_string())
            .collect();
        if states.is_empty() || states.iter().any(|s| s != "valid") {
            problems.push(format!("effects lock states {states:?}"));
        }
        let log: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("est/log.json")).unwrap()).unwrap();
        if log["lock_state"] != "valid" {
            problems.push(format!("log lock_state {}", log["lock_state"]));
        }
        evidence(|e| e.theta(&read_theta(&d.join("est/theta.csv"))));
    }
    let second = run(&[&estimate[..], &["--out", "again"]].concat());
    let stderr = String::from_utf8_lossy(&second.stderr);
    if second.status.success() || !stderr.contains("test set already used") {
        problems.push(format!("second estimate exited {:?}: {}", second.status.code(), stderr.trim()));
    }
    (
        problems.is_empty(),
        if problems.is_empty() {
            format!("library and command line both stamp valid and refuse reuse (exit {:?})", second.status.code())
        } else {
            problems.join("; ")
        },
    )
}

fn read_theta(path: &Path) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().skip(1).map(|x| x.parse().unwrap()).collect())
        .collect();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn c1_simplex() -> Outcome {
    evidence(|e| {
        (
            e.theta_rows > 0 && e.theta_bad == 0,
            format!(
                "{} θ rows from {} fits and applications, {} off the simplex, worst deviation {:.1e}",
                e.theta_rows, e.theta_sources, e.theta_bad, e.theta_worst
            ),
        )
    })
}

fn c3_monotone() -> Outcome {
    evidence(|e| {
        (
            e.fits > 0 && e.bound_bad.is_empty(),
            format!(
                "{} fits, {} with a bound decrease beyond {BOUND_SLACK:e}{}",
                e.fits,
                e.bound_bad.len(),
                e.bound_bad.first().map(|s| format!(" (first: {s})")).unwrap_or_default()
            ),
        )
    })
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("TEXTCAUSE_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    // evidence-gathering criteria first, the long stability run last, then the two audits
    let criteria: [(u32, &str, fn() -> Outcome); 13] = [
        (2, "topic recovery", c2_recovery),
        (4, "E-step gradient", c4_gradient),
        (5, "averaged prior", c5_averaged_prior),
        (6, "AISV enumeration", c6_aisv),
        (7, "identification Monte Carlo", c7_identification),
        (8, "overfitting demo", c8_overfit),
        (9, "feature recovery", c9_sibp),
        (10, "saturated designs", c10_saturated),
        (11, "bootstrap coverage", c11_coverage),
        (13, "lock discipline", c13_lock),
        (12, "stability harness", c12_stability),
        (1, "simplex invariant", c1_simplex),
        (3, "bound monotonicity", c3_monotone),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut results = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            results.push((id, format!("criterion {id:>2} {name}: SKIP")));
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        let line = format!(
            "criterion {id:>2} {name}: {} — {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        results.push((id, line));
    }
    results.sort_by_key(|r| r.0);
    println!("\nacceptance summary");
    for (_, line) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|r| r.1.contains(": FAIL")).count();
    let skipped = results.iter().filter(|r| r.1.ends_with(": SKIP")).count();
    println!("{} passed, {failed} failed, {skipped} skipped", results.len() - failed - skipped);
    if failed > 0 || skipped > 0 {
        std::process::exit(1);
    }
}
