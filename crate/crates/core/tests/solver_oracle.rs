mod common;

use common::{donor_ids, grid_oracle, random_instance, seeded};
use nalgebra::DMatrix;
use proptest::prelude::*;
use synthcontrol::solver::{fit_weights, sum_squared_residuals};

fn cols(columns: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(columns[0].len(), columns.len(), |r, c| columns[c][r])
}

#[test]
fn grid_oracle_recovers_planted_mixture() {
    // Oracle first: treated = 0.3 A + 0.7 B, scanned at step 1e-4.
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [3.0, 1.0, 2.0, 7.0];
    let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
    let x = cols(&[&a, &b]);
    let (obj, w) = grid_oracle(&y, &x, 1e-4);
    assert!(obj < 1e-20);
    assert!((w[0] - 0.3).abs() < 1e-9 && (w[1] - 0.7).abs() < 1e-9);

    let fitted = fit_weights(&donor_ids(2), &y, &x).unwrap();
    assert!((fitted.weights[0] - w[0]).abs() < 1e-6);
    assert!((fitted.weights[1] - w[1]).abs() < 1e-6);
    assert!(fitted.objective < 1e-12);
}

#[test]
fn solver_matches_grid_on_random_instances() {
    let mut rng = seeded(20);
    for case in 0..40 {
        let donors = 1 + case % 3;
        let years = 2 + case % 9;
        let (y, x) = random_instance(&mut rng, donors, years);
        let (grid, _) = grid_oracle(&y, &x, 1e-3);
        let fitted = fit_weights(&donor_ids(donors), &y, &x).unwrap();
        assert!(
            fitted.objective <= grid + 1e-6,
            "case {case}: solver {} vs grid {grid}",
            fitted.objective
        );
    }
}

#[test]
fn stored_objective_matches_residuals() {
    let mut rng = seeded(5);
    for _ in 0..20 {
        let (y, x) = random_instance(&mut rng, 6, 12);
        let fitted = fit_weights(&donor_ids(6), &y, &x).unwrap();
        let direct = sum_squared_residuals(&y, &x, &fitted.weights);
        assert!((fitted.objective - direct).abs() <= 1e-9 * direct.max(1e-300));
        assert!((fitted.pre_mspe - direct / 12.0).abs() <= 1e-12 * direct.max(1.0));
        assert_eq!(fitted.pre_rmspe, fitted.pre_mspe.sqrt());
    }
}

fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..=9, 2usize..=18).prop_flat_map(|(n, t)| {
        (Just(n), Just(t), prop::collection::vec(-50.0f64..50.0, t * (n + 1)))
    })
}

fn split(n: usize, t: usize, raw: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let y = raw[..t].to_vec();
    let x = DMatrix::from_column_slice(t, n, &raw[t..]);
    (y, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_lie_on_the_simplex((n, t, raw) in instance()) {
        let (y, x) = split(n, t, &raw);
        let w = fit_weights(&donor_ids(n), &y, &x).unwrap();
        prop_assert!(w.weights.iter().all(|&v| v >= 0.0));
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn beats_vertices_and_uniform((n, t, raw) in instance()) {
        let (y, x) = split(n, t, &raw);
        let w = fit_weights(&donor_ids(n), &y, &x).unwrap();
        let slack = 1e-9 * w.objective.max(1.0);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            prop_assert!(w.objective <= sum_squared_residuals(&y, &x, &e) + slack);
        }
        let uniform = vec![1.0 / n as f64; n];
        prop_assert!(w.objective <= sum_squared_residuals(&y, &x, &uniform) + slack);
    }

    #[test]
    fn synthetic_stays_in_donor_hull((n, t, raw) in instance()) {
        let (y, x) = split(n, t, &raw);
        let w = fit_weights(&donor_ids(n), &y, &x).unwrap();
        for r in 0..t {
            let row: Vec<f64> = (0..n).map(|j| x[(r, j)]).collect();
            let synth: f64 = row.iter().zip(&w.weights).map(|(a, b)| a * b).sum();
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let eps = 1e-12 * (lo.abs() + hi.abs() + 1.0);
            prop_assert!(synth >= lo - eps && synth <= hi + eps);
        }
    }

    #[test]
    fn scaling_preserves_weights(
        (n, t, raw) in instance(),
        c in prop::sample::select(vec![1e-3, 0.5, 3.0, 1e3]),
    ) {
        let (y, x) = split(n, t, &raw);
        let base = fit_weights(&donor_ids(n), &y, &x).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
        let scaled = fit_weights(&donor_ids(n), &ys, &(&x * c)).unwrap();
        let diff = (scaled.objective - c * c * base.objective).abs();
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>() + 1.0;
        prop_assert!(diff <= 1e-8 * c * c * base.objective + 1e-12 * c * c * norm);
        for (a, b) in base.weights.iter().zip(&scaled.weights) {
            prop_assert!((a - b).abs() <= 1e-6, "{:?} vs {:?}", base.weights, scaled.weights);
        }
    }

    #[test]
    fn reruns_are_bitwise_identical((n, t, raw) in instance()) {
        let (y, x) = split(n, t, &raw);
        let a = fit_weights(&donor_ids(n), &y, &x).unwrap();
        let b = fit_weights(&donor_ids(n), &y, &x).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let bits = |w: &[f64]| w.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.weights), bits(&b.weights));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn active_set_matches_support_enumeration((n, t, raw) in instance()) {
        let (y, x) = split(n, t, &raw);
        let w = fit_weights(&donor_ids(n), &y, &x).unwrap();
        let exact = common::support_oracle(&y, &x);
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>() + 1.0;
        prop_assert!(
            w.objective <= exact + 1e-9 * exact + 1e-11 * norm,
            "solver {} vs oracle {exact}", w.objective
        );
    }
}
