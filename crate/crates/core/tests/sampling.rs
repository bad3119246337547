mod common;

use common::{names, random_model, random_policy, sample_rows, SigmaTally};
use multifair::data_model::AdjustmentDataset;
use multifair::estimation::{fit_empirical, EmpiricalModel, Matrix};
use multifair::evaluation::{evaluate_analytic_for, evaluate_sampled};
use multifair::fairness_lp::Criterion;
use multifair::policy::{analytic_confusions, AdjustmentPolicy};
use multifair::synth::{generate, ClassBalance, GroupBalance, PredBias, RegimeSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn policy_of(p: Vec<Matrix>) -> AdjustmentPolicy {
    let c = p[0].nrows();
    let mut pol = AdjustmentPolicy::uniform(names("c", c), names("g", p.len()));
    pol.p = p;
    pol
}

fn dataset_from(em: &EmpiricalModel, n: usize, seed: u64) -> AdjustmentDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, y_hat, a) = sample_rows(&mut rng, em, n);
    AdjustmentDataset::new(y, y_hat, a, names("c", em.n_classes()), names("g", em.n_groups())).unwrap()
}

#[test]
fn sampled_predictions_converge_to_analytic_confusions() {
    let mut tally = SigmaTally::default();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let em = random_model(&mut rng, 2, 3);
        let pol = policy_of(random_policy(&mut rng, 2, 3));
        let ds = dataset_from(&em, 100_000, seed + 100);
        let report = evaluate_sampled(&pol, &ds, seed).unwrap();
        let analytic = evaluate_analytic_for(&pol, &em, Criterion::TermByTerm);
        tally.check(report.accuracy, analytic.accuracy, ds.len());
        let w = analytic_confusions(&pol, &em);
        for a in 0..2 {
            for j in 0..3 {
                let n_aj = ds.rows().filter(|&(y, _, g)| y == j && g == a).count();
                for i in 0..3 {
                    tally.check(report.confusions[a][(i, j)], w[a][(i, j)], n_aj);
                }
            }
        }
    }
    assert!(tally.ok(), "{tally:?} allowed {}", tally.allowed());
}

#[test]
fn estimation_error_shrinks_with_sample_size() {
    let spec = RegimeSpec {
        n: 1000,
        groups: 2,
        class_balance: ClassBalance::OneRare,
        group_balance: GroupBalance::OneSlight,
        pred_bias: PredBias::Medium,
        seed: 3,
    };
    let generator = spec.generator().unwrap();
    let error = |n: usize| {
        let em = fit_empirical(&generate(&RegimeSpec { n, ..spec }).unwrap(), 0.0).unwrap();
        (0..2)
            .map(|a| (&em.z[a] - generator.true_confusion(a)).abs().max())
            .fold(0.0, f64::max)
    };
    let (small, large) = (error(1_000), error(100_000));
    assert!(large < small / 3.0, "{small} -> {large}");
}

#[test]
fn generator_matches_its_parameters() {
    let spec = RegimeSpec {
        n: 1_000_000,
        groups: 2,
        class_balance: ClassBalance::Balanced,
        group_balance: GroupBalance::NoMinority,
        pred_bias: PredBias::Low,
        seed: 9,
    };
    let ds = generate(&spec).unwrap();
    let em = fit_empirical(&ds, 0.0).unwrap();
    let n = ds.len();
    assert!(common::within_3_sigma(em.p_a[0], 0.5, n));
    let mean_tdr = |a: usize| em.z[a].diagonal().mean();
    // Each group's mean TDR is an average of three binomial proportions.
    let n_a = |a: usize| em.p_a[a] * n as f64;
    let var = |a: usize, t: f64| t * (1.0 - t) / n_a(a);
    let sigma = (var(0, 0.8) + var(1, 0.7)).sqrt();
    let gap = mean_tdr(0) - mean_tdr(1);
    assert!((gap - 0.10).abs() <= 3.0 * sigma, "gap {gap}, sigma {sigma}");
}

#[test]
fn argmax_rule_can_undo_the_adjustment() {
    // Group 1 keeps its blackbox; group 0 is mixed down to group 1's confusion.
    let z0 = Matrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
    let z1 = Matrix::from_row_slice(2, 2, &[0.7, 0.4, 0.3, 0.6]);
    let p0 = &z1 * z0.clone().try_inverse().unwrap();
    assert!(p0.iter().all(|&v| v >= 0.0));
    let em = EmpiricalModel::from_distributions(vec![vec![0.25; 2]; 2], vec![z0, z1], &names("g", 2)).unwrap();
    let fair = policy_of(vec![p0, Matrix::identity(2, 2)]);
    let sampled = evaluate_analytic_for(&fair, &em, Criterion::TermByTerm);
    assert!(sampled.disparity < 1e-12);
    for a in 0..2 {
        for k in 0..2 {
            assert_eq!(fair.argmax_predict(k, a), k);
        }
    }
    // Taking the argmax reproduces the blackbox, which is unfair.
    let argmax = evaluate_analytic_for(
        &AdjustmentPolicy::identity(names("c", 2), names("g", 2)),
        &em,
        Criterion::TermByTerm,
    );
    assert!(argmax.disparity > 0.1);
}
