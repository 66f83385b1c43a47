use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use textcause::causal::{
    adjust_fdr, bootstrap, estimate, estimate_acie, estimate_amce, estimate_ate, EffectRequest, Estimand, Weighting,
};
use textcause::splitter::LockState;
use textcause::synth::{potential_proportions, StmSimSpec};
use textcause::Error;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

/// The four (z1, z2) cells, `reps` documents each.
fn saturated(reps: usize) -> DMatrix<f64> {
    let cells = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];
    DMatrix::from_fn(4 * reps, 2, |i, j| if j == 0 { cells[i % 4].0 } else { cells[i % 4].1 })
}

fn outcome(z: &DMatrix<f64>, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    z.row_iter().map(|r| f(r[0], r[1])).collect()
}

#[test]
fn difference_in_means() {
    let e = estimate_ate(&[0.8, 0.6, 0.2, 0.4], &[1.0, 1.0, 0.0, 0.0], 0, 0, 0).unwrap();
    assert!(close(e.point, 0.4));
    assert!(e.ci_low <= e.point && e.point <= e.ci_high);
    assert_eq!(e.lock_state, LockState::NotApplicable);

    let y = [0.3, 0.5, 0.1, 0.3, 0.5, 0.1];
    let t = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    let e = estimate_ate(&y, &t, 2, 500, 1).unwrap();
    assert!(close(e.point, 0.0));
    assert!(e.ci_low <= 0.0 && 0.0 <= e.ci_high);
    assert_eq!(e.estimand, Estimand::Ate { k: 2 });
}

#[test]
fn empty_arm_violates_positivity() {
    let err = estimate_ate(&[1.0, 2.0], &[1.0, 1.0], 0, 0, 0).unwrap_err();
    assert!(matches!(err, Error::Positivity(_)), "{err}");
}

#[test]
fn additive_cells_give_their_coefficients() {
    let z = saturated(5);
    let y = outcome(&z, |a, b| 2.0 * a + b);
    for m in [Weighting::Empirical, Weighting::Uniform] {
        assert!(close(estimate_amce(&y, &z, 0, m, 0, 0).unwrap().point, 2.0));
        assert!(close(estimate_amce(&y, &z, 1, m, 0, 0).unwrap().point, 1.0));
        assert!(close(estimate_acie(&y, &z, 0, 1, m, 0, 0).unwrap().point, 0.0));
    }
}

#[test]
fn interaction_cells() {
    let z = saturated(3);
    let y = outcome(&z, |a, b| a * b);
    assert!(close(estimate_amce(&y, &z, 0, Weighting::Uniform, 0, 0).unwrap().point, 0.5));
    for m in [Weighting::Empirical, Weighting::Uniform] {
        assert!(close(estimate_acie(&y, &z, 0, 1, m, 0, 0).unwrap().point, 1.0));
    }
}

#[test]
fn single_feature_amce_is_a_difference_in_means() {
    let y = [3.0, 1.0, 2.0, 7.0, 5.0];
    let zv = [1.0, 0.0, 0.0, 1.0, 1.0];
    let z = DMatrix::from_column_slice(5, 1, &zv);
    let amce = estimate_amce(&y, &z, 0, Weighting::Empirical, 0, 0).unwrap();
    let ate = estimate_ate(&y, &zv, 0, 0, 0).unwrap();
    assert!((amce.point - ate.point).abs() < 1e-12);
}

#[test]
fn constant_outcome_has_no_interaction() {
    let z = saturated(4);
    let y = vec![1.5; z.nrows()];
    let e = estimate_acie(&y, &z, 0, 1, Weighting::Empirical, 0, 0).unwrap();
    assert!(e.point.abs() < 1e-12 && e.se.abs() < 1e-12, "{} {}", e.point, e.se);
}

#[test]
fn support_failures_are_named() {
    let z = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    let y = [1.0, 2.0, 3.0, 4.0];
    assert!(matches!(estimate_amce(&y, &z, 0, Weighting::Empirical, 0, 0), Err(Error::CommonSupport(_))));
    let z = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    match estimate_acie(&y, &z, 0, 1, Weighting::Empirical, 0, 0) {
        Err(Error::MissingCell(cell)) => assert!(cell.contains("z1=1, z2=1"), "{cell}"),
        other => panic!("expected a missing cell, got {other:?}"),
    }
    // AMCE still works, but the unseen combination is reported
    let e = estimate_amce(&y, &z, 0, Weighting::Empirical, 0, 0).unwrap();
    assert!(e.warnings.iter().any(|w| w.contains("(z1=1, z2=1)")));
}

#[test]
fn bootstrap_contract() {
    let b = bootstrap(30, 200, 4, |_| Ok(2.5)).unwrap();
    assert_eq!((b.ci_low, b.ci_high, b.se), (2.5, 2.5, 0.0));
    let stat = |idx: &[usize]| Ok(idx.iter().map(|&i| i as f64).sum::<f64>() / idx.len() as f64);
    assert_eq!(bootstrap(30, 300, 9, stat).unwrap(), bootstrap(30, 300, 9, stat).unwrap());
    assert!(bootstrap(30, 0, 9, stat).is_err());
}

#[test]
fn degenerate_resamples_are_redrawn() {
    // one treated unit among 12: many resamples miss it and must be redrawn
    let mut t = vec![0.0; 12];
    t[0] = 1.0;
    let y: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let e = estimate_ate(&y, &t, 0, 300, 2).unwrap();
    assert!(e.redrawn > 0);
    assert_eq!(e.b, 300);
}

#[test]
fn request_dispatch_and_lock_label() {
    let z = saturated(2);
    let y = outcome(&z, |a, b| 2.0 * a + b);
    let req = EffectRequest {
        estimand: Estimand::Amce { k: 0 },
        m: Weighting::Empirical,
        bootstrap: 50,
        seed: 1,
    };
    let e = estimate(&req, &y, None, Some(&z)).unwrap().with_lock(LockState::Valid);
    assert!(close(e.point, 2.0));
    assert_eq!(e.lock_state, LockState::Valid);
    let ate = EffectRequest {
        estimand: Estimand::Ate { k: 0 },
        ..req
    };
    assert!(estimate(&ate, &y, None, Some(&z)).is_err());
}

#[test]
fn fdr_adjustment_is_monotone_in_p() {
    let mut est: Vec<_> = [0.0, 0.1, 0.5, 2.0]
        .iter()
        .enumerate()
        .map(|(k, &shift)| {
            let y: Vec<f64> = (0..40).map(|i| (i % 7) as f64 + if i < 20 { shift } else { 0.0 }).collect();
            let t: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
            estimate_ate(&y, &t, k, 0, 0).unwrap()
        })
        .collect();
    adjust_fdr(&mut est);
    for e in &est {
        let q = e.q_value.unwrap();
        assert!(q >= e.p_value && q <= 1.0);
    }
}

#[test]
fn re_randomized_ate_centres_on_the_population_effect() {
    // fixed population; outcomes are topic proportions with a constant shift in the
    // first log-odds; truth is the population mean of theta_1(1) - theta_1(0)
    let mut spec = StmSimSpec::new(3, 10, 400, 1.2);
    spec.sigma = DMatrix::identity(2, 2) * 0.3;
    let (c, t) = potential_proportions(&spec, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let truth = (0..400).map(|i| t[(i, 0)] - c[(i, 0)]).sum::<f64>() / 400.0;
    assert!((truth - 0.25).abs() < 0.03, "population effect {truth}");
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut arms: Vec<f64> = (0..400).map(|i| (i % 2) as f64).collect();
    let mut total = 0.0;
    for _ in 0..500 {
        arms.shuffle(&mut rng);
        let y: Vec<f64> = (0..400).map(|i| if arms[i] == 1.0 { t[(i, 0)] } else { c[(i, 0)] }).collect();
        total += estimate_ate(&y, &arms, 0, 0, 0).unwrap().point;
    }
    assert!((total / 500.0 - truth).abs() < 0.01);
}

proptest! {
    #[test]
    fn ate_ignores_document_order(
        data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 4..60),
        seed in any::<u64>(),
    ) {
        let mut data = data;
        data[0].1 = true;
        data[1].1 = false;
        let y: Vec<f64> = data.iter().map(|d| d.0).collect();
        let t: Vec<f64> = data.iter().map(|d| if d.1 { 1.0 } else { 0.0 }).collect();
        let before = estimate_ate(&y, &t, 0, 0, 0).unwrap();
        data.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let y: Vec<f64> = data.iter().map(|d| d.0).collect();
        let t: Vec<f64> = data.iter().map(|d| if d.1 { 1.0 } else { 0.0 }).collect();
        let after = estimate_ate(&y, &t, 0, 0, 0).unwrap();
        prop_assert!((before.point - after.point).abs() < 1e-12);
        prop_assert!((before.se - after.se).abs() < 1e-12);
    }
}
