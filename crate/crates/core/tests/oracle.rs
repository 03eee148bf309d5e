mod common;

use common::{close, dataset, fd_gradient, naive_loglik};
use coxmic::mic::{beta_of, grad_q_n, penalty_sum, q_n, MicPenalty};
use coxmic::partial::{information, loglik, score, LikelihoodWorkspace};
use coxmic::SurvivalDataset;
use proptest::prelude::*;

/// Small random survival problem: times on a coarse grid so ties are common,
/// at least one event, and a coefficient vector of matching length.
fn instance() -> impl Strategy<Value = (SurvivalDataset, Vec<f64>)> {
    (2usize..=50, 1usize..=4).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(1u32..=12, n),
            prop::collection::vec(prop::bool::weighted(0.7), n),
            prop::collection::vec(-2.0f64..2.0, n * p),
            prop::collection::vec(-1.0f64..1.0, p),
        )
            .prop_map(move |(t, d, z, beta)| {
                let mut status: Vec<u8> = d.into_iter().map(u8::from).collect();
                status[0] = 1;
                let time = t.into_iter().map(f64::from).collect();
                (dataset(time, status, z, p), beta)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sweep_matches_double_loop((ds, beta) in instance()) {
        let fast = loglik(&ds, &beta).unwrap();
        let slow = naive_loglik(&ds, &beta);
        prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "{fast} vs {slow}");
    }

    #[test]
    fn score_is_gradient_of_loglik((ds, beta) in instance()) {
        let u = score(&ds, &beta).unwrap();
        let fd = fd_gradient(|b| naive_loglik(&ds, b), &beta, 1e-5);
        for j in 0..beta.len() {
            prop_assert!(close(u[j], fd[j], 1e-5), "j={j}: {} vs {}", u[j], fd[j]);
        }
    }

    #[test]
    fn information_is_negative_hessian((ds, beta) in instance()) {
        let info = information(&ds, &beta).unwrap();
        let p = beta.len();
        for k in 0..p {
            let col = fd_gradient(|b| score(&ds, b).unwrap()[k], &beta, 1e-6);
            for j in 0..p {
                prop_assert!(close(info[(k, j)], -col[j], 1e-5), "({k},{j}) {} vs {}", info[(k, j)], -col[j]);
            }
        }
    }

    #[test]
    fn information_is_positive_semidefinite((ds, beta) in instance()) {
        let info = information(&ds, &beta).unwrap();
        let scale = info.amax().max(1.0);
        let min = info.symmetric_eigen().eigenvalues.min();
        prop_assert!(min >= -1e-10 * scale);
    }

    #[test]
    fn loglik_is_concave_along_lines((ds, beta) in instance(), t in 0.0f64..1.0) {
        let other: Vec<f64> = beta.iter().map(|b| -b * 0.5 + 0.3).collect();
        let mid: Vec<f64> = beta.iter().zip(&other).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let lhs = loglik(&ds, &mid).unwrap();
        let rhs = t * loglik(&ds, &beta).unwrap() + (1.0 - t) * loglik(&ds, &other).unwrap();
        prop_assert!(lhs >= rhs - 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn q_gradient_matches_differences(
        (ds, gamma) in instance(),
        a in 0.5f64..20.0,
        lambda0 in 0.5f64..6.0,
    ) {
        let pen = MicPenalty::new(a, lambda0).unwrap();
        let g = grad_q_n(&ds, &gamma, pen).unwrap();
        let fd = fd_gradient(|x| q_n(&ds, x, pen).unwrap(), &gamma, 1e-6);
        for j in 0..gamma.len() {
            prop_assert!(close(g[j], fd[j], 1e-5), "j={j}: {} vs {}", g[j], fd[j]);
        }
    }

    #[test]
    fn reparameterization_invariants(gamma in prop::collection::vec(-3.0f64..3.0, 1..8), a in 0.1f64..500.0) {
        let beta = beta_of(&gamma, a);
        for (g, b) in gamma.iter().zip(&beta) {
            prop_assert_eq!(*b == 0.0, *g == 0.0);
            prop_assert!(b.abs() <= g.abs());
            prop_assert!(*b == 0.0 || b.signum() == g.signum());
        }
        let pen = penalty_sum(&gamma, a);
        prop_assert!((0.0..=gamma.len() as f64).contains(&pen));
    }

    #[test]
    fn loglik_ignores_row_order_and_column_shifts((ds, beta) in instance(), shift in -3.0f64..3.0) {
        let base = loglik(&ds, &beta).unwrap();
        let n = ds.n();
        let rev: Vec<usize> = (0..n).rev().collect();
        let permuted = SurvivalDataset::new(
            rev.iter().map(|&i| ds.time()[i]).collect(),
            rev.iter().map(|&i| ds.status()[i]).collect(),
            ds.covariates().select_rows(&rev),
            ds.names().to_vec(),
        ).unwrap();
        let mut z = ds.covariates().clone();
        z.column_mut(0).add_scalar_mut(shift);
        let shifted = SurvivalDataset::new(ds.time().to_vec(), ds.status().to_vec(), z, ds.names().to_vec()).unwrap();
        prop_assert!(close(loglik(&permuted, &beta).unwrap(), base, 1e-10));
        prop_assert!(close(loglik(&shifted, &beta).unwrap(), base, 1e-9));
    }
}

#[test]
fn breslow_ties_by_hand() {
    // times 1,1,2 all events, one covariate, beta = ln 2:
    // risk weights 1, 2, 1 for z = 0, 1, 0.
    let ds = dataset(vec![1.0, 1.0, 2.0], vec![1, 1, 1], vec![0.0, 1.0, 0.0], 1);
    let b = 2f64.ln();
    let expected = (0.0 + b - 2.0 * 4f64.ln()) + (0.0 - 1f64.ln());
    assert!((loglik(&ds, &[b]).unwrap() - expected).abs() < 1e-14);
}

#[test]
fn extreme_predictors_stay_finite() {
    let ds = dataset(
        vec![1.0, 2.0, 3.0, 4.0],
        vec![1, 1, 0, 1],
        vec![400.0, -400.0, 300.0, 0.0],
        1,
    );
    let ws = LikelihoodWorkspace::new(&ds);
    let e = ws.evaluate_all(&[2.0]).unwrap();
    assert!(e.loglik.is_finite());
    assert!(e.score.unwrap()[0].is_finite());
    assert!(e.information.unwrap()[(0, 0)].is_finite());
}

#[test]
fn saturated_penalty_gradient_is_exact_limit() {
    let ds = dataset(vec![1.0, 2.0, 3.0], vec![1, 0, 1], vec![0.3, -0.1, 1.2], 1);
    let pen = MicPenalty::new(1e6, 2.0).unwrap();
    // a gamma^2 far past saturation: beta = gamma, penalty flat
    let g = grad_q_n(&ds, &[0.5], pen).unwrap();
    let u = score(&ds, &[0.5]).unwrap();
    assert!((g[0] + 2.0 * u[0]).abs() < 1e-12);
}
