mod common;

use curemix::model::{self, cure_prob, likelihood_parts, log_likelihood, log_prior, mixture_weights, survival_population};
use curemix::{LinkSpec, Parameters, PriorConfig, SurvivalDataset};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn likelihood_matches_direct_formula_on_small_instances() {
    let mut r = common::rng(1);
    for k in 0..20 {
        let link = if k % 2 == 0 { LinkSpec::Linear } else { LinkSpec::NeuralNet { width: 2 } };
        let g = 1 + k % 3;
        let data = common::random_data(&mut r, 5.max(g), g, 2, 0.5);
        let params = common::random_params(&mut r, 3, g, 2, link, 0.8);
        let got = log_likelihood(&params, link, &data).unwrap();
        let want = common::naive_loglik(&params, link, &data);
        assert!((got - want).abs() < 1e-10, "instance {k}: {got} vs {want}");
    }
}

#[test]
fn likelihood_matches_direct_formula_on_larger_instances() {
    let mut r = common::rng(2);
    for k in 0..10 {
        let link = LinkSpec::NeuralNet { width: 1 + k % 3 };
        let data = common::random_data(&mut r, 60, 3, 3, 0.4);
        let params = common::random_params(&mut r, 5, 3, 3, link, 0.8);
        let got = log_likelihood(&params, link, &data).unwrap();
        let want = common::naive_loglik(&params, link, &data);
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "instance {k}: {got} vs {want}");
    }
}

#[test]
fn susceptible_probability_form_is_the_same_likelihood() {
    // Writing r = 1 − c: δ log(1 − r(1 − Σπ(1 − a))) + (1 − δ) log(r Σπ b).
    let mut r = common::rng(3);
    for _ in 0..10 {
        let data = common::random_data(&mut r, 12, 2, 2, 0.5);
        let params = common::random_params(&mut r, 3, 2, 2, LinkSpec::Linear, 0.8);
        let parts = likelihood_parts(&params, LinkSpec::Linear, &data).unwrap();
        let mut total = 0.0;
        for i in 0..data.len() {
            let g = data.group(i);
            let rg = 1.0 - parts.cure[i][g];
            let w = &parts.weights[i][g];
            if data.is_censored(i) {
                let s: f64 = (0..w.len()).map(|m| w[m] * (1.0 - parts.a[i][m])).sum();
                total += (1.0 - rg * (1.0 - s)).ln();
            } else {
                let f: f64 = (0..w.len()).map(|m| w[m] * parts.b[i][m]).sum();
                total += (rg * f).ln();
            }
        }
        let ll = log_likelihood(&params, LinkSpec::Linear, &data).unwrap();
        assert!((ll - total).abs() < 1e-10);
    }
}

#[test]
fn log_prior_matches_statrs_densities() {
    let mut r = common::rng(4);
    for k in 0..10 {
        let link = if k % 2 == 0 { LinkSpec::Linear } else { LinkSpec::NeuralNet { width: 3 } };
        let params = common::random_params(&mut r, 4, 3, 2, link, 0.8);
        let prior = PriorConfig {
            beta_c: 1.0 + r.random::<f64>(),
            beta_d: 1.0 + r.random::<f64>(),
            ig_a: 0.5 + r.random::<f64>(),
            ig_b: 0.5 + r.random::<f64>(),
        };
        let got = log_prior(&params, &prior).unwrap();
        let want = common::naive_log_prior(&params, prior.beta_c, prior.beta_d, prior.ig_a, prior.ig_b);
        assert!((got - want).abs() < 1e-9, "instance {k}: {got} vs {want}");
    }
}

#[test]
fn forced_cure_edge_cases() {
    let mut params = Parameters::zeros(1, 1, 1, LinkSpec::Linear);
    params.lambda[0] = vec![f64::INFINITY, 0.0];
    let x = [1.0, 0.0];
    assert_eq!(cure_prob(&params, LinkSpec::Linear, &x, 0).unwrap(), 1.0);
    for t in [0.1, 1.0, 50.0] {
        assert_eq!(survival_population(&params, LinkSpec::Linear, &x, 0, t).unwrap(), 1.0);
    }
    let censored = SurvivalDataset::from_raw(vec![2.0], vec![true], vec![0], vec![vec![0.0]], 1).unwrap();
    assert_eq!(log_likelihood(&params, LinkSpec::Linear, &censored).unwrap(), 0.0);
    let event = SurvivalDataset::from_raw(vec![2.0], vec![false], vec![0], vec![vec![0.0]], 1).unwrap();
    assert_eq!(log_likelihood(&params, LinkSpec::Linear, &event).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn zero_hidden_weights_reduce_to_covariate_free_model() {
    let mut r = common::rng(5);
    let link = LinkSpec::NeuralNet { width: 3 };
    let mut params = common::random_params(&mut r, 3, 2, 2, link, 0.8);
    for row in params.theta.iter_mut() {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    let a = [1.0, 0.4, -1.3];
    let b = [1.0, -2.0, 5.0];
    for g in 0..2 {
        assert_eq!(cure_prob(&params, link, &a, g).unwrap(), cure_prob(&params, link, &b, g).unwrap());
        assert_eq!(
            mixture_weights(&params, link, &a, g).unwrap(),
            mixture_weights(&params, link, &b, g).unwrap()
        );
    }
}

#[test]
fn cure_and_weights_match_oracles() {
    let mut r = common::rng(6);
    for _ in 0..20 {
        let link = LinkSpec::NeuralNet { width: 2 };
        let params = common::random_params(&mut r, 4, 2, 3, link, 1.0);
        let x: Vec<f64> = std::iter::once(1.0).chain((0..3).map(|_| common::random_normal(&mut r, 1.0))).collect();
        for g in 0..2 {
            let c = cure_prob(&params, link, &x, g).unwrap();
            assert!((c - common::naive_cure(&params, link, &x, g)).abs() < 1e-14);
            let w = mixture_weights(&params, link, &x, g).unwrap();
            for (a, b) in w.iter().zip(common::naive_weights(&params, link, &x, g)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn softmax_is_stable_for_huge_logits() {
    let mut params = Parameters::zeros(2, 1, 1, LinkSpec::Linear);
    params.beta = vec![vec![800.0, 0.0], vec![799.0, 0.0]];
    let w = mixture_weights(&params, LinkSpec::Linear, &[1.0, 0.0], 0).unwrap();
    let e = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((w[0] - e).abs() < 1e-12 && (w[1] - (1.0 - e)).abs() < 1e-12, "{w:?}");
}

#[test]
fn all_zero_gating_column_is_an_invariant_error() {
    let mut params = Parameters::zeros(2, 2, 1, LinkSpec::Linear);
    params.gamma[0][1] = false;
    params.gamma[1][1] = false;
    assert!(matches!(
        mixture_weights(&params, LinkSpec::Linear, &[1.0, 0.0], 1),
        Err(curemix::Error::Invariant(_))
    ));
}

#[test]
fn dimension_mismatches_are_config_errors() {
    let params = Parameters::zeros(2, 2, 2, LinkSpec::Linear);
    assert!(cure_prob(&params, LinkSpec::Linear, &[1.0], 0).is_err());
    assert!(cure_prob(&params, LinkSpec::Linear, &[1.0, 0.0, 0.0], 2).is_err());
    let data = SurvivalDataset::from_raw(vec![1.0], vec![false], vec![0], vec![vec![0.0, 1.0, 2.0]], 2).unwrap();
    assert!(log_likelihood(&params, LinkSpec::Linear, &data).is_err());
}

fn arb_instance() -> impl Strategy<Value = (Parameters, LinkSpec, Vec<f64>, usize)> {
    (any::<u64>(), 1usize..5, 1usize..4, 0usize..4).prop_map(|(seed, m, g, k)| {
        let mut r = common::rng(seed);
        let link = if k == 0 { LinkSpec::Linear } else { LinkSpec::NeuralNet { width: k } };
        let params = common::random_params(&mut r, m, g, 2, link, 1.5);
        let x = vec![1.0, common::random_normal(&mut r, 2.0), common::random_normal(&mut r, 2.0)];
        let arm = r.random_range(0..g);
        (params, link, x, arm)
    })
}

proptest! {
    #[test]
    fn weights_form_a_gated_simplex((params, link, x, g) in arb_instance()) {
        let w = mixture_weights(&params, link, &x, g).unwrap();
        let s: f64 = w.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        for (m, wm) in w.iter().enumerate() {
            prop_assert!(*wm >= 0.0, "negative weight");
            if !params.gamma[m][g] {
                prop_assert_eq!(*wm, 0.0);
            }
        }
    }

    #[test]
    fn survival_is_monotone_and_above_cure((params, link, x, g) in arb_instance(), t0 in 0.01f64..5.0, dt in 0.0f64..5.0) {
        let c = cure_prob(&params, link, &x, g).unwrap();
        prop_assert!(c > 0.0 && c < 1.0);
        let s0 = survival_population(&params, link, &x, g, t0).unwrap();
        let s1 = survival_population(&params, link, &x, g, t0 + dt).unwrap();
        prop_assert!(s1 <= s0 + 1e-15);
        prop_assert!(s1 >= c - 1e-15 && s0 <= 1.0 + 1e-15);
    }

    #[test]
    fn survival_plateaus_at_cure((params, link, x, g) in arb_instance()) {
        let c = cure_prob(&params, link, &x, g).unwrap();
        let s = survival_population(&params, link, &x, g, 1e12).unwrap();
        prop_assert!((s - c).abs() < 1e-9);
    }

    #[test]
    fn component_relabelling_leaves_likelihood_unchanged(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let data = common::random_data(&mut r, 10, 2, 2, 0.5);
        let params = common::random_params(&mut r, 4, 2, 2, LinkSpec::Linear, 0.8);
        let perm = [2, 0, 3, 1];
        let permuted = params.permute_components(&perm);
        let a = log_likelihood(&params, LinkSpec::Linear, &data).unwrap();
        let b = log_likelihood(&permuted, LinkSpec::Linear, &data).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn likelihood_is_finite_away_from_forcing(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let data = common::random_data(&mut r, 8, 2, 1, 0.5);
        let params = common::random_params(&mut r, 2, 2, 1, LinkSpec::NeuralNet { width: 2 }, 1.0);
        let link = LinkSpec::NeuralNet { width: 2 };
        prop_assert!(log_likelihood(&params, link, &data).unwrap().is_finite());
    }
}

#[test]
fn features_prepend_intercept_for_neural_net() {
    let mut params = Parameters::zeros(1, 1, 1, LinkSpec::NeuralNet { width: 2 });
    params.theta = vec![vec![0.5, 1.0], vec![-1.0, 2.0]];
    let y = model::features(&params, LinkSpec::NeuralNet { width: 2 }, &[1.0, 0.25]);
    assert_eq!(y.len(), 3);
    assert_eq!(y[0], 1.0);
    assert!((y[1] - 0.75f64.tanh()).abs() < 1e-15);
    assert!((y[2] - (-0.5f64).tanh()).abs() < 1e-15);
}
