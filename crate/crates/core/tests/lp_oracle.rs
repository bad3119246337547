mod common;

use common::{random_model, vertex_enumeration};
use multifair::fairness_lp::{assemble, Criterion, FairnessSpec, ObjectiveKind, ObjectiveSpec};
use multifair::lp_solver::{solve, ConstraintBlock, LinearProgram, SolveStatus, SolverOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spec<R: Rng>(rng: &mut R) -> (ObjectiveSpec, FairnessSpec) {
    let criterion = Criterion::ALL[rng.random_range(0..4)];
    let eps = if rng.random_bool(0.5) {
        0.0
    } else {
        rng.random_range(0.0..0.3)
    };
    let obj = if rng.random_bool(0.5) {
        ObjectiveKind::Unweighted
    } else {
        ObjectiveKind::Weighted
    };
    (ObjectiveSpec::of_kind(obj), FairnessSpec::new(criterion, eps).unwrap())
}

#[test]
fn assembled_programs_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let em = random_model(&mut rng, 2, 2);
        let (obj, spec) = random_spec(&mut rng);
        let lp = assemble(&em, &obj, &spec).unwrap();
        let sol = lp.solve(&SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let oracle = vertex_enumeration(&lp.program).expect("uniform policy is feasible");
        assert!((sol.objective - oracle).abs() <= 1e-8, "{} vs {oracle}", sol.objective);
    }
}

#[test]
fn weak_duality_on_assembled_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..40 {
        let em = random_model(&mut rng, 3, 3);
        let (obj, spec) = random_spec(&mut rng);
        let lp = assemble(&em, &obj, &spec).unwrap();
        let sol = lp.solve(&SolverOptions::default()).unwrap();
        let bound = lp.program.dual_bound(&sol.duals_eq, &sol.duals_ub);
        assert!(sol.objective >= bound - 1e-8);
        assert!((sol.objective - bound).abs() <= 1e-8, "gap {}", sol.objective - bound);
    }
}

#[test]
fn repeated_solves_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let em = random_model(&mut rng, 3, 4);
    let lp = assemble(
        &em,
        &ObjectiveSpec::weighted(),
        &FairnessSpec::exact(Criterion::ClasswiseOdds),
    )
    .unwrap();
    let first = lp.solve(&SolverOptions::default()).unwrap();
    for _ in 0..100 {
        let again = lp.solve(&SolverOptions::default()).unwrap();
        let same = first.x.iter().zip(&again.x).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
    }
}

fn small_lp() -> impl Strategy<Value = LinearProgram> {
    (2usize..=5, 0usize..=2, 1usize..=4).prop_flat_map(|(n, m_eq, m_ub)| {
        (
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(prop::collection::vec(-2.0..2.0f64, n), m_eq),
            prop::collection::vec(prop::collection::vec(-2.0..2.0f64, n), m_ub),
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(0.0..2.0f64, n),
        )
            .prop_map(move |(c, eq, ub, x0, upper)| {
                // Right-hand sides taken at a point inside the box keep the program feasible.
                let upper: Vec<f64> = upper.iter().zip(&x0).map(|(u, x)| x + u).collect();
                let dot = |r: &Vec<f64>| r.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>();
                let eq_rhs = eq.iter().map(dot).collect();
                let ub_rhs = ub.iter().map(|r| dot(r) + 0.5).collect();
                LinearProgram {
                    objective: c,
                    eq: ConstraintBlock { rows: eq, rhs: eq_rhs },
                    ub: ConstraintBlock { rows: ub, rhs: ub_rhs },
                    lower: vec![0.0; n],
                    upper,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generic_programs_match_vertex_enumeration(lp in small_lp()) {
        let sol = solve(&lp, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let oracle = vertex_enumeration(&lp).unwrap();
        prop_assert!((sol.objective - oracle).abs() <= 1e-8, "{} vs {}", sol.objective, oracle);
        let r = lp.residuals(&sol.x);
        prop_assert!(r.eq <= 1e-8 && r.ub <= 1e-8 && r.bounds <= 1e-9);
        prop_assert!(sol.objective >= lp.dual_bound(&sol.duals_eq, &sol.duals_ub) - 1e-8);
    }
}
