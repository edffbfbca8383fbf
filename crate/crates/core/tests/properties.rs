//! Property tests over randomly generated models and candidate lists.

use meanfield::engine::{gaussian_bias_update, step_sequential, GaussianDynamics, LatentMode, ModelSpec};
use meanfield::linalg::{Matrix, Vector};
use meanfield::models::{FisherBundle, FisherSource, GaussianTargetModel, GmmModel, NormalModel, NormalPrior};
use meanfield::selection::{gap_constants, select, Criterion, CriterionValue};
use proptest::prelude::*;

fn spd(entries: &[f64], d: usize, ridge: f64) -> Matrix {
    let a = Matrix::from_iterator(d, d, entries.iter().copied());
    &a * a.transpose() + Matrix::identity(d, d) * ridge
}

fn spd_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..6).prop_flat_map(|d| (Just(d), prop::collection::vec(-2.0f64..2.0, d * d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sequential_updates_never_decrease_the_normal_elbo(
        data in prop::collection::vec(-50.0f64..50.0, 2..25),
        mu0 in -10.0f64..10.0,
        sigma0_sq in 0.1f64..100.0,
        a in 0.05f64..5.0,
        b in 0.05f64..5.0,
        order in prop::collection::vec(0usize..2, 10..40),
    ) {
        let model = NormalModel::new(data, NormalPrior::new(mu0, sigma0_sq, a, b).unwrap()).unwrap();
        let mut state = model.initial_state(0).unwrap();
        let mut elbo = model.elbo(&state).unwrap();
        for j in order {
            state = step_sequential(&model, &state, j, 1.0).unwrap();
            let next = model.elbo(&state).unwrap();
            prop_assert!(next >= elbo - 1e-9 * elbo.abs().max(1.0), "ELBO fell from {elbo} to {next}");
            elbo = next;
        }
    }

    #[test]
    fn sequential_updates_never_increase_gaussian_regret(
        (d, entries) in spd_strategy(),
        bias in prop::collection::vec(-3.0f64..3.0, 6),
        coordinates in prop::collection::vec(0usize..6, 1..30),
    ) {
        let v = spd(&entries, d, 0.1);
        let mut dynamics = GaussianDynamics::new(v, None, Vector::from_column_slice(&bias[..d])).unwrap();
        for l in coordinates {
            let before = dynamics.regret(1.0);
            dynamics = gaussian_bias_update(&dynamics, Some(l % d), 1.0).unwrap();
            prop_assert!(dynamics.regret(1.0) <= before * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn gaussian_target_cavi_matches_bias_dynamics(
        (d, entries) in spd_strategy(),
        bias in prop::collection::vec(-3.0f64..3.0, 6),
        l in 0usize..6,
        gamma in 0.05f64..=1.0,
    ) {
        let v = spd(&entries, d, 0.1);
        let b = Vector::from_column_slice(&bias[..d]);
        let model = GaussianTargetModel::new(v.clone(), 1.0, Vector::zeros(d)).unwrap();
        let state = step_sequential(&model, &model.state_with_bias(&b).unwrap(), l % d, gamma).unwrap();
        let dynamics = gaussian_bias_update(&GaussianDynamics::new(v, None, b).unwrap(), Some(l % d), gamma).unwrap();
        let from_model = model.bias(&state).unwrap();
        for i in 0..d {
            prop_assert!((from_model[i] - dynamics.bias()[i]).abs() <= 1e-10 * (1.0 + dynamics.bias()[i].abs()));
        }
    }

    #[test]
    fn selection_ignores_candidate_order(
        fits in prop::collection::vec((-500.0f64..0.0, 1usize..8, -30.0f64..30.0), 1..8),
        rotation in 0usize..8,
    ) {
        let values: Vec<CriterionValue> = fits
            .iter()
            .enumerate()
            .map(|(i, &(loglik, d_m, gap))| {
                CriterionValue::new(format!("m{i}"), loglik - gap.abs(), loglik, d_m, 200)
                    .unwrap()
                    .with_evidence(loglik - gap.abs() + 0.5, 0.01)
            })
            .collect();
        let mut rotated = values.clone();
        rotated.rotate_left(rotation % values.len());
        rotated.reverse();
        for criterion in [Criterion::Elbo, Criterion::Bic, Criterion::Aic, Criterion::Evidence] {
            let a = select(&values, criterion).unwrap();
            let b = select(&rotated, criterion).unwrap();
            prop_assert_eq!(&a.model_id, &b.model_id);
        }
    }

    /// Hadamard–Fischer: `det V ≤ det diag(V)` and `det V ≤ det blockdiag(V)`, so the
    /// mean-field and block gaps to the evidence are never negative.
    #[test]
    fn gap_constants_respect_fischer_inequality((d, entries) in spd_strategy(), split in 1usize..5) {
        let v = spd(&entries, d, 0.05);
        let split = 1 + split % (d - 1);
        let bundle = FisherBundle::from_parts(v.clone(), v, Vector::zeros(d), 0.0, FisherSource::Analytic, 0.0).unwrap();
        let constants = gap_constants(&bundle, Some(&[split, d - split])).unwrap();
        prop_assert!(constants.c_star >= -1e-10);
        prop_assert!(constants.c_block_star.unwrap() >= -1e-10);
        prop_assert!(constants.c_block_star.unwrap() <= constants.c_star + 1e-10);
        prop_assert!((constants.c_nolatent_star.unwrap() - constants.c_star).abs() < 1e-10);
        prop_assert!((constants.c_tilde_star - (constants.c_star - constants.c_bic_star)).abs() < 1e-10);
    }

    #[test]
    fn mixture_assignments_are_probability_rows(
        data in prop::collection::vec(-20.0f64..20.0, 3..30),
        k in 1usize..5,
        centers in prop::collection::vec((-20.0f64..20.0, 0.01f64..10.0), 5),
    ) {
        let model = GmmModel::new(data.clone(), k, 3.0).unwrap();
        let rows = vec![vec![1.0 / k as f64; k]; data.len()];
        let mut state = model.state(&centers[..k], rows).unwrap();
        model.refresh_latents(&mut state, LatentMode::Simultaneous).unwrap();
        for latent in &state.latent_factors {
            let p = latent.as_categorical().unwrap().probabilities();
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
