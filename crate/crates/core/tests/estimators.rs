use ordsub::design::{partition_dataset, subclassify};
use ordsub::estimation::{
    estimate_iptw, estimate_naive, estimate_standard_regression, estimate_subclass_means, estimate_subclass_regression,
    global_test, iptw_level_means, normalized_weights, EffectTable,
};
use ordsub::synthetic::LinearOutcomeDesign;
use ordsub::{fit_ordered_logit, CategoryModel, Dataset};
use proptest::prelude::*;

fn all_estimators(data: &Dataset, k: usize) -> Vec<EffectTable> {
    let fit = fit_ordered_logit(data, &[0, 1, 2]).unwrap();
    let part = partition_dataset(data, &fit.scores(data), k).unwrap();
    vec![
        estimate_naive(data).unwrap(),
        estimate_subclass_means(data, &part).unwrap(),
        estimate_subclass_regression(data, &part, &[0, 1, 2]).unwrap().0,
        estimate_standard_regression(data, &[0, 1, 2]).unwrap(),
        estimate_iptw(data, &fit, 4, 1).unwrap(),
    ]
}

#[test]
fn estimates_are_transitive() {
    let design = LinearOutcomeDesign::confounded();
    for seed in 0..20 {
        let data = design.generate(400, seed).unwrap();
        for table in all_estimators(&data, 3) {
            for t in 0..5 {
                for s in 0..5 {
                    for r in 0..5 {
                        let gap = table.estimate(t, s) + table.estimate(s, r) - table.estimate(t, r);
                        assert!(gap.abs() < 1e-10, "{} {t} {s} {r}: {gap}", table.estimator);
                    }
                }
            }
        }
    }
}

#[test]
fn single_subclass_without_adjustment_is_naive() {
    let data = LinearOutcomeDesign::confounded().generate(300, 3).unwrap();
    let part = partition_dataset(&data, &vec![0.0; 300], 1).unwrap();
    let naive = estimate_naive(&data).unwrap();
    let (reg, _) = estimate_subclass_regression(&data, &part, &[]).unwrap();
    let means = estimate_subclass_means(&data, &part).unwrap();
    for (a, (b, c)) in naive.pairs.iter().zip(reg.pairs.iter().zip(&means.pairs)) {
        assert!((a.estimate - b.estimate).abs() < 1e-10);
        assert!((a.estimate - c.estimate).abs() < 1e-10);
    }
}

#[test]
fn subclass_means_aggregate_cell_means() {
    let data = LinearOutcomeDesign::confounded().generate(500, 4).unwrap();
    let fit = fit_ordered_logit(&data, &[0, 1, 2]).unwrap();
    let k = 4;
    let part = partition_dataset(&data, &fit.scores(&data), k).unwrap();
    let table = estimate_subclass_means(&data, &part).unwrap();
    let mut mu = [0.0; 5];
    for b in 0..k {
        let members = part.members(b);
        let w = members.len() as f64 / data.n() as f64;
        for (level, m) in mu.iter_mut().enumerate() {
            let ys: Vec<f64> = members.iter().filter(|&&i| data.treatment()[i] == level).map(|&i| data.outcome()[i]).collect();
            *m += w * ys.iter().sum::<f64>() / ys.len() as f64;
        }
    }
    for t in 1..5 {
        for s in 0..t {
            assert!((table.estimate(t, s) - (mu[t] - mu[s])).abs() < 1e-12);
        }
    }
}

struct FixedProbs(Vec<f64>);

impl CategoryModel for FixedProbs {
    fn columns(&self) -> &[usize] {
        &[]
    }
    fn levels(&self) -> usize {
        self.0.len()
    }
    fn category_probs(&self, _: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

#[test]
fn constant_weights_reproduce_naive_exactly() {
    let data = LinearOutcomeDesign::confounded().generate(300, 6).unwrap();
    let mu = iptw_level_means(&data, &FixedProbs(vec![0.1, 0.3, 0.2, 0.15, 0.25])).unwrap();
    let naive = estimate_naive(&data).unwrap();
    for t in 1..5 {
        for s in 0..t {
            assert_eq!(mu[t] - mu[s], naive.estimate(t, s));
        }
    }
}

#[test]
fn normalized_weights_sum_to_one_and_ignore_scale() {
    let data = LinearOutcomeDesign::confounded().generate(200, 7).unwrap();
    let fit = fit_ordered_logit(&data, &[0, 1, 2]).unwrap();
    let w = ordsub::estimation::inverse_probability_weights(&data, &fit).unwrap();
    let norm = normalized_weights(&data, &w);
    let scaled: Vec<f64> = w.iter().map(|v| v * 37.5).collect();
    let norm_scaled = normalized_weights(&data, &scaled);
    for level in 0..5 {
        let total: f64 = norm.iter().zip(data.treatment()).filter(|(_, &t)| t == level).map(|(v, _)| v).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    for (a, b) in norm.iter().zip(&norm_scaled) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn iptw_bootstrap_is_reproducible() {
    let data = LinearOutcomeDesign::confounded().generate(300, 8).unwrap();
    let fit = fit_ordered_logit(&data, &[0, 1, 2]).unwrap();
    let a = estimate_iptw(&data, &fit, 30, 99).unwrap();
    let b = estimate_iptw(&data, &fit, 30, 99).unwrap();
    let c = estimate_iptw(&data, &fit, 30, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.pairs[0].se, c.pairs[0].se);
    assert!(a.pairs.iter().all(|p| p.se > 0.0));
}

#[test]
fn global_test_detects_a_real_effect() {
    let data = LinearOutcomeDesign::confounded().generate(600, 9).unwrap();
    let fit = fit_ordered_logit(&data, &[0, 1, 2]).unwrap();
    let part = partition_dataset(&data, &fit.scores(&data), 5).unwrap();
    let g = global_test(&data, &part, &[0, 1, 2]).unwrap();
    assert_eq!(g.df.0, 4);
    assert!(g.p_value < 1e-6);
}

fn outcome_shift() -> impl Strategy<Value = (u64, f64, f64)> {
    (0u64..1000, -50.0..50.0f64, prop_oneof![-4.0..-0.1f64, 0.1..4.0f64])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn location_scale_equivariance((seed, shift, scale) in outcome_shift()) {
        let data = LinearOutcomeDesign::confounded().generate(250, seed).unwrap();
        let fit = fit_ordered_logit(&data, &[0, 1, 2]);
        prop_assume!(fit.is_ok());
        let part = subclassify(&fit.unwrap().scores(&data), data.ids(), 2).unwrap();
        let mut part = part;
        part.tabulate(data.treatment(), 5);
        prop_assume!(part.cell_counts.iter().flatten().all(|&c| c >= 5));
        let moved = data.with_outcome(data.outcome().iter().map(|y| scale * y + shift).collect()).unwrap();
        let pairs = |d: &Dataset| -> Vec<EffectTable> {
            vec![
                estimate_naive(d).unwrap(),
                estimate_subclass_means(d, &part).unwrap(),
                estimate_subclass_regression(d, &part, &[0, 1]).unwrap().0,
                estimate_standard_regression(d, &[0, 1, 2]).unwrap(),
            ]
        };
        for (a, b) in pairs(&data).iter().zip(&pairs(&moved)) {
            for (p, q) in a.pairs.iter().zip(&b.pairs) {
                prop_assert!((q.estimate - scale * p.estimate).abs() < 1e-9 * (1.0 + p.estimate.abs() * scale.abs()));
                prop_assert!((q.se - scale.abs() * p.se).abs() < 1e-9 * (1.0 + p.se * scale.abs()));
            }
        }
    }
}
