mod common;

use common::{names, random_model, random_policy};
use multifair::estimation::{EmpiricalModel, Matrix};
use multifair::evaluation::evaluate_analytic_for;
use multifair::fairness_lp::{
    assemble, fairness_rows, objective_vector, Criterion, FairnessSpec, ObjectiveSpec, VarIndex,
};
use multifair::lp_solver::{SolveStatus, SolverOptions};
use multifair::policy::{analytic_confusions, AdjustmentPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn policy_of(p: Vec<Matrix>) -> AdjustmentPolicy {
    let c = p[0].nrows();
    let mut pol = AdjustmentPolicy::uniform(names("c", c), names("g", p.len()));
    pol.p = p;
    pol
}

fn flatten(p: &[Matrix]) -> Vec<f64> {
    let c = p[0].nrows();
    let idx = VarIndex {
        groups: p.len(),
        classes: c,
    };
    let mut x = vec![0.0; idx.len()];
    for (a, m) in p.iter().enumerate() {
        for i in 0..c {
            for k in 0..c {
                x[idx.index(a, i, k)] = m[(i, k)];
            }
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Pr(Y_adj = c | Y != c, A = a)` from `W` and the class mix of the group.
fn direct_fdr(w: &Matrix, p_y: &[f64], c: usize) -> f64 {
    let num: f64 = (0..p_y.len()).filter(|&j| j != c).map(|j| w[(c, j)] * p_y[j]).sum();
    let den: f64 = (0..p_y.len()).filter(|&j| j != c).map(|j| p_y[j]).sum();
    num / den
}

fn rng_and_shape(seed: u64) -> (ChaCha8Rng, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = rng.random_range(2..=3);
    let c = rng.random_range(2..=5);
    (rng, g, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fdr_mixture_identity(seed in any::<u64>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        let em = random_model(&mut rng, g, c);
        let p = random_policy(&mut rng, g, c);
        let w = analytic_confusions(&policy_of(p.clone()), &em);
        let report = evaluate_analytic_for(&policy_of(p.clone()), &em, Criterion::ClasswiseOdds);
        for a in 0..g {
            let pv = &p[a] * &em.v[a];
            for cls in 0..c {
                let direct = direct_fdr(&w[a], &em.p_ya[a], cls);
                prop_assert!((pv[(cls, cls)] - direct).abs() <= 1e-10);
                prop_assert!((report.fdr[a][cls] - direct).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn adjusted_confusions_are_column_stochastic(seed in any::<u64>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        let em = random_model(&mut rng, g, c);
        let w = analytic_confusions(&policy_of(random_policy(&mut rng, g, c)), &em);
        for m in &w {
            for j in 0..c {
                prop_assert!((m.column(j).sum() - 1.0).abs() <= 1e-12);
                prop_assert!(m.column(j).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn objective_values_match_closed_forms(seed in any::<u64>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        let em = random_model(&mut rng, g, c);
        let p = random_policy(&mut rng, g, c);
        let x = flatten(&p);
        let w = analytic_confusions(&policy_of(p), &em);
        let accuracy: f64 = (0..g).map(|a| (0..c).map(|j| em.p_ya[a][j] * w[a][(j, j)]).sum::<f64>()).sum();
        let unweighted = dot(&objective_vector(&em, &ObjectiveSpec::unweighted()).unwrap(), &x);
        prop_assert!((unweighted - (1.0 - accuracy)).abs() <= 1e-8);
        let weighted = dot(&objective_vector(&em, &ObjectiveSpec::weighted()).unwrap(), &x);
        let traces: f64 = w.iter().map(|m| c as f64 - m.trace()).sum();
        prop_assert!((weighted - traces).abs() <= 1e-8);
    }

    #[test]
    fn uniform_policy_is_always_feasible(seed in any::<u64>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        let em = random_model(&mut rng, g, c);
        let x = vec![1.0 / c as f64; g * c * c];
        for criterion in Criterion::ALL {
            let lp = assemble(&em, &ObjectiveSpec::weighted(), &FairnessSpec::exact(criterion)).unwrap();
            let r = lp.program.residuals(&x);
            prop_assert!(r.eq <= 1e-10 && r.ub <= 1e-10 && r.bounds == 0.0);
        }
    }

    #[test]
    fn criteria_are_nested(seed in any::<u64>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        // FDR averages over the group's own class mix, so equal confusions
        // imply equal FDR only when that mix is shared.
        let em = shared_class_mix(&random_model(&mut rng, g, c));
        // A random loss reaches a different vertex of the term-by-term region each time.
        let loss = (0..g).map(|_| Matrix::from_fn(c, c, |_, _| rng.random::<f64>())).collect();
        let obj = ObjectiveSpec::custom(loss).unwrap();
        let strict = assemble(&em, &obj, &FairnessSpec::exact(Criterion::TermByTerm)).unwrap();
        let sol = strict.solve(&SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        for weaker in [Criterion::ClasswiseOdds, Criterion::EqualOpportunity] {
            for row in fairness_rows(&em, &FairnessSpec::exact(weaker)) {
                prop_assert!(row.evaluate(&sol.x).abs() <= 1e-10, "{:?}", row.quantity);
            }
        }
    }

    #[test]
    fn relaxation_is_monotone(seed in any::<u64>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        let em = random_model(&mut rng, g, c);
        let criterion = Criterion::ALL[rng.random_range(0..4)];
        let mut last = f64::INFINITY;
        for eps in [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let lp = assemble(&em, &ObjectiveSpec::unweighted(), &FairnessSpec::new(criterion, eps).unwrap()).unwrap();
            let sol = lp.solve(&SolverOptions::default()).unwrap();
            prop_assert!(sol.objective <= last + 1e-9);
            last = sol.objective;
        }
    }

    #[test]
    fn fairness_holds_at_the_optimum(seed in any::<u64>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        let em = random_model(&mut rng, g, c);
        for criterion in Criterion::ALL {
            let lp = assemble(&em, &ObjectiveSpec::unweighted(), &FairnessSpec::exact(criterion)).unwrap();
            let sol = lp.solve(&SolverOptions::default()).unwrap();
            let idx = &lp.var_index;
            let p: Vec<Matrix> = (0..g)
                .map(|a| Matrix::from_fn(c, c, |i, k| sol.x[idx.index(a, i, k)]))
                .collect();
            let report = evaluate_analytic_for(&policy_of(p.clone()), &em, criterion);
            let gap = |v: &[Vec<f64>]| {
                v.iter().flat_map(|x| v.iter().map(move |y| (x, y)))
                    .flat_map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b).abs()))
                    .fold(0.0, f64::max)
            };
            let w: Vec<Vec<f64>> = report.confusions.iter().map(|m| m.iter().copied().collect()).collect();
            let rates: Vec<Vec<f64>> = (0..g)
                .map(|a| (&p[a] * nalgebra::DVector::from_vec(em.p_yhat_given_a[a].clone())).iter().copied().collect())
                .collect();
            let worst = match criterion {
                Criterion::TermByTerm => gap(&w),
                Criterion::ClasswiseOdds => gap(&report.tdr).max(gap(&report.fdr)),
                Criterion::EqualOpportunity => gap(&report.tdr),
                Criterion::DemographicParity => gap(&rates),
            };
            prop_assert!(worst <= 1e-6, "{criterion}: {worst}");
            // Expected accuracy and the unweighted objective are two views of one number.
            prop_assert!((report.accuracy - (1.0 - sol.objective)).abs() <= 1e-8);
        }
    }

    #[test]
    fn trivial_flag_matches_mixture_test(seed in any::<u64>(), zero_row in any::<bool>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        let em = random_model(&mut rng, g, c);
        let mut p = random_policy(&mut rng, g, c);
        if zero_row {
            let (a, i) = (rng.random_range(0..g), rng.random_range(0..c));
            let m = &mut p[a];
            for k in 0..c {
                let moved = m[(i, k)];
                m[(i, k)] = 0.0;
                m[((i + 1) % c, k)] += moved;
            }
        }
        let pol = policy_of(p);
        let report = evaluate_analytic_for(&pol, &em, Criterion::TermByTerm);
        let w = analytic_confusions(&pol, &em);
        let mixture = (0..g).any(|a| {
            (0..c).any(|i| (0..c).map(|j| em.p_ya[a][j] * w[a][(i, j)]).sum::<f64>() <= 1e-12)
        });
        prop_assert_eq!(report.trivial, mixture);
        prop_assert_eq!(report.trivial, zero_row);
    }

    #[test]
    fn disparity_symmetries(seed in any::<u64>()) {
        let (mut rng, g, c) = rng_and_shape(seed);
        let em = random_model(&mut rng, g, c);
        let p = random_policy(&mut rng, g, c);
        let base = evaluate_analytic_for(&policy_of(p.clone()), &em, Criterion::TermByTerm).disparity;

        // Reverse the group order.
        let rev_em = EmpiricalModel::from_distributions(
            em.p_ya.iter().rev().cloned().collect(),
            em.z.iter().rev().cloned().collect(),
            &names("g", g),
        ).unwrap();
        let rev_p: Vec<Matrix> = p.iter().rev().cloned().collect();
        let reversed = evaluate_analytic_for(&policy_of(rev_p), &rev_em, Criterion::TermByTerm).disparity;
        prop_assert!((base - reversed).abs() <= 1e-12);

        // Relabel classes by a cyclic shift everywhere.
        let s = |i: usize| (i + 1) % c;
        let perm = |m: &Matrix| {
            let mut out = Matrix::zeros(c, c);
            for i in 0..c {
                for k in 0..c {
                    out[(s(i), s(k))] = m[(i, k)];
                }
            }
            out
        };
        let shifted_em = EmpiricalModel::from_distributions(
            em.p_ya.iter().map(|r| (0..c).map(|j| r[(j + c - 1) % c]).collect()).collect(),
            em.z.iter().map(perm).collect(),
            &names("g", g),
        ).unwrap();
        let shifted = evaluate_analytic_for(&policy_of(p.iter().map(perm).collect()), &shifted_em, Criterion::TermByTerm).disparity;
        prop_assert!((base - shifted).abs() <= 1e-12);

        // Equal confusions give zero disparity.
        let same = EmpiricalModel::from_distributions(
            em.p_ya.clone(),
            vec![em.z[0].clone(); g],
            &names("g", g),
        ).unwrap();
        let equal = evaluate_analytic_for(&policy_of(vec![p[0].clone(); g]), &same, Criterion::TermByTerm).disparity;
        prop_assert!(equal.abs() <= 1e-15);
        prop_assert!(base > 0.0);
    }
}

fn shared_class_mix(em: &EmpiricalModel) -> EmpiricalModel {
    let mix: Vec<f64> = (0..em.n_classes())
        .map(|j| em.p_ya.iter().map(|r| r[j]).sum())
        .collect();
    let p_ya = em.p_a.iter().map(|pa| mix.iter().map(|m| pa * m).collect()).collect();
    EmpiricalModel::from_distributions(p_ya, em.z.clone(), &names("g", em.n_groups())).unwrap()
}

#[test]
fn equal_confusions_with_different_class_mix_break_fdr_equality() {
    let w = Matrix::from_row_slice(3, 3, &[0.6, 0.1, 0.3, 0.2, 0.7, 0.1, 0.2, 0.2, 0.6]);
    let p_ya = vec![vec![0.1, 0.2, 0.2], vec![0.2, 0.25, 0.05]];
    let em = EmpiricalModel::from_distributions(p_ya, vec![w.clone(), w], &names("g", 2)).unwrap();
    let x = flatten(&[Matrix::identity(3, 3), Matrix::identity(3, 3)]);
    let tbt = fairness_rows(&em, &FairnessSpec::exact(Criterion::TermByTerm));
    assert!(tbt.iter().all(|r| r.evaluate(&x).abs() <= 1e-15));
    let classwise = fairness_rows(&em, &FairnessSpec::exact(Criterion::ClasswiseOdds));
    let worst = classwise.iter().map(|r| r.evaluate(&x).abs()).fold(0.0, f64::max);
    assert!(worst > 0.05, "{worst}");
}

#[test]
fn identity_policy_violates_term_by_term_when_confusions_differ() {
    let z = vec![
        Matrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]),
        Matrix::from_row_slice(2, 2, &[0.6, 0.3, 0.4, 0.7]),
    ];
    let em = EmpiricalModel::from_distributions(vec![vec![0.25; 2]; 2], z, &names("g", 2)).unwrap();
    let lp = assemble(
        &em,
        &ObjectiveSpec::unweighted(),
        &FairnessSpec::exact(Criterion::TermByTerm),
    )
    .unwrap();
    let identity = flatten(&[Matrix::identity(2, 2), Matrix::identity(2, 2)]);
    assert!(lp.program.residuals(&identity).eq > 0.1);
}
