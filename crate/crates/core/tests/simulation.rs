use ordsub::design::EliminationRule;
use ordsub::simulation::{
    first_principal_component, impute_set1, impute_set2, run_study, simulate_replication, EstimatorSpec, PcaBasis, StudyConfig,
};
use ordsub::synthetic::{draw_categorical, observational_base};
use ordsub::{fit_multinomial_logit, unit_probs, Column, ColumnKind, Dataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn set2_matches_exhaustive_nearest_neighbour() {
    let base = observational_base(300, 21).unwrap();
    let cols: Vec<usize> = (0..8).collect();
    let full = impute_set2(&base, &cols, PcaBasis::Correlation).unwrap();
    let pc = first_principal_component(&base, &cols, PcaBasis::Correlation).unwrap();
    let t = base.treatment();
    for i in 0..base.n() {
        for level in 0..5 {
            let expected = if level == t[i] {
                base.outcome()[i]
            } else {
                let donor = (0..base.n())
                    .filter(|&j| t[j] == level)
                    .min_by(|&a, &b| (pc[a] - pc[i]).abs().total_cmp(&(pc[b] - pc[i]).abs()).then(base.ids()[a].cmp(&base.ids()[b])))
                    .unwrap();
                base.outcome()[donor]
            };
            assert_eq!(full.po[i][level], expected, "unit {i} level {level}");
        }
    }
}

#[test]
fn set2_ties_go_to_the_lowest_id() {
    let rows = vec![vec![0.0], vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]];
    let mut data = Dataset::from_rows(vec![Column::numeric("x")], &rows, vec![0, 1, 1, 1, 1], vec![0.0, 10.0, 20.0, 30.0, 40.0], 2).unwrap();
    let full = impute_set2(&data, &[0], PcaBasis::Covariance).unwrap();
    assert_eq!(full.po[0][1], 10.0);
    data = data.subset(&[0, 2, 1, 4, 3]);
    let again = impute_set2(&data, &[0], PcaBasis::Covariance).unwrap();
    assert_eq!(again.po[0][1], 10.0);
}

#[test]
fn set1_has_null_effects() {
    let full = impute_set1(&observational_base(200, 1).unwrap());
    assert!(full.true_pate.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn first_component_ignores_column_order_and_units() {
    let base = observational_base(250, 2).unwrap();
    let a = first_principal_component(&base, &[0, 1, 2, 3, 6], PcaBasis::Correlation).unwrap();
    let b = first_principal_component(&base, &[6, 3, 1, 0, 2], PcaBasis::Correlation).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-10);
    }
    let rows: Vec<Vec<f64>> = (0..base.n()).map(|i| base.row(i).iter().map(|v| v * 12.0 - 3.0).collect()).collect();
    let rescaled = Dataset::from_rows(base.columns().to_vec(), &rows, base.treatment().to_vec(), base.outcome().to_vec(), 5).unwrap();
    let c = first_principal_component(&rescaled, &[0, 1, 2, 3, 6], PcaBasis::Correlation).unwrap();
    for (x, y) in a.iter().zip(&c) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn categorical_draws_follow_their_probabilities() {
    let probs = [0.05, 0.2, 0.4, 0.15, 0.2];
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut counts = [0usize; 5];
    for _ in 0..n {
        counts[draw_categorical(&mut rng, &probs)] += 1;
    }
    let stat: f64 = counts.iter().zip(&probs).map(|(&c, &p)| (c as f64 - n as f64 * p).powi(2) / (n as f64 * p)).sum();
    assert!(stat < ChiSquared::new(4.0).unwrap().inverse_cdf(0.999), "chi-square {stat}");
}

#[test]
fn replicated_assignment_follows_the_fitted_model() {
    let base = observational_base(400, 3).unwrap();
    let full = impute_set1(&base);
    let mut observed = [0.0; 5];
    let mut expected = [0.0; 5];
    for seed in 0..25 {
        let rep = simulate_replication(&full, &(0..8).collect::<Vec<_>>(), 3, seed).unwrap();
        let model = fit_multinomial_logit(&base, &rep.assignment_columns).unwrap();
        for i in 0..base.n() {
            observed[rep.data.treatment()[i]] += 1.0;
            for (e, p) in expected.iter_mut().zip(unit_probs(&model, &base, i)) {
                *e += p;
            }
        }
        assert_eq!(rep.assignment_columns.len(), 3);
        for i in 0..base.n() {
            assert_eq!(rep.data.outcome()[i], full.po[i][rep.data.treatment()[i]]);
        }
    }
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    assert!(stat < ChiSquared::new(4.0).unwrap().inverse_cdf(0.999), "chi-square {stat}");
}

fn small_study(seed: u64) -> StudyConfig {
    StudyConfig {
        estimators: vec![EstimatorSpec::SubclassRegression { k: 3 }, EstimatorSpec::Naive, EstimatorSpec::Iptw],
        replications: 6,
        candidate_columns: (0..8).collect(),
        n_covariates: 3,
        gps_columns: (0..8).collect(),
        adjustment: vec![0, 1, 2],
        continuous_columns: vec![0, 1, 2, 3, 6],
        elimination: EliminationRule::E2,
        bootstrap_b: 5,
        max_retries: 5,
        seed,
    }
}

#[test]
fn study_is_deterministic_for_a_seed() {
    let base = observational_base(400, 4).unwrap();
    let full = impute_set2(&base, &(0..8).collect::<Vec<_>>(), PcaBasis::Correlation).unwrap();
    let a = run_study(&full, &small_study(5)).unwrap();
    let b = run_study(&full, &small_study(5)).unwrap();
    let c = run_study(&full, &small_study(6)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    assert_eq!(a.replications_completed + a.replications_failed, 6);
}

#[cfg(feature = "parallel")]
#[test]
fn study_output_does_not_depend_on_thread_count() {
    let base = observational_base(400, 4).unwrap();
    let full = impute_set1(&base);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&run_study(&full, &small_study(8)).unwrap()).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn binary_columns_pass_through_imputation_untouched() {
    let base = observational_base(150, 9).unwrap();
    assert!(base.columns().iter().any(|c| c.kind == ColumnKind::Binary));
    let full = impute_set2(&base, &(0..8).collect::<Vec<_>>(), PcaBasis::Correlation).unwrap();
    assert_eq!(full.base, base);
}
