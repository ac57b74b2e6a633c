#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use synthcontrol::{PanelDataset, PanelSchema};

/// Brute-force minimum of `||y - X w||^2` over a regular grid on the simplex
/// (at most three donors). Returns `(objective, weights)`.
pub fn grid_oracle(y: &[f64], x: &DMatrix<f64>, step: f64) -> (f64, Vec<f64>) {
    let n = x.ncols();
    assert!((1..=3).contains(&n), "grid oracle handles 1-3 donors");
    let ticks = (1.0 / step).round() as usize;
    let sse = |w: &[f64]| -> f64 {
        (0..x.nrows())
            .map(|t| {
                let fit: f64 = (0..n).map(|j| x[(t, j)] * w[j]).sum();
                (y[t] - fit).powi(2)
            })
            .sum()
    };
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut consider = |w: Vec<f64>| {
        let obj = sse(&w);
        if obj < best.0 {
            best = (obj, w);
        }
    };
    match n {
        1 => consider(vec![1.0]),
        2 => {
            for i in 0..=ticks {
                let a = i as f64 / ticks as f64;
                consider(vec![a, 1.0 - a]);
            }
        }
        _ => {
            for i in 0..=ticks {
                for j in 0..=ticks - i {
                    let a = i as f64 / ticks as f64;
                    let b = j as f64 / ticks as f64;
                    consider(vec![a, b, (1.0 - a - b).max(0.0)]);
                }
            }
        }
    }
    best
}

/// Random small instance: `donors` columns, `years` rows, values in [0, 10).
pub fn random_instance(rng: &mut StdRng, donors: usize, years: usize) -> (Vec<f64>, DMatrix<f64>) {
    let x = DMatrix::from_fn(years, donors, |_, _| rng.random_range(0.0..10.0));
    let y = (0..years).map(|_| rng.random_range(0.0..10.0)).collect();
    (y, x)
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn donor_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("D{i}")).collect()
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

/// Synthetic JST-shaped panel (invented values, real missing-data pattern).
pub fn synthetic_jst() -> PanelDataset {
    synthcontrol::load_panel(fixture_path("synthetic_jst.csv"), &PanelSchema::jst()).unwrap()
}

/// Exact minimum over the simplex by enumerating supports; each support's
/// equality-constrained least squares is solved from its KKT system by LU.
pub fn support_oracle(y: &[f64], x: &DMatrix<f64>) -> f64 {
    let n = x.ncols();
    let sse = |w: &[f64]| -> f64 {
        (0..x.nrows())
            .map(|t| {
                let fit: f64 = (0..n).map(|j| x[(t, j)] * w[j]).sum();
                (y[t] - fit).powi(2)
            })
            .sum()
    };
    let mut best = f64::INFINITY;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        best = best.min(sse(&e));
    }
    for mask in 1usize..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let k = support.len();
        if k < 2 {
            continue;
        }
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = nalgebra::DVector::zeros(k + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = (0..x.nrows()).map(|t| x[(t, i)] * x[(t, j)]).sum::<f64>();
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = (0..x.nrows()).map(|t| x[(t, i)] * y[t]).sum::<f64>();
        }
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if sol.iter().take(k).any(|v| !v.is_finite() || *v < -1e-12) {
            continue;
        }
        let mut w = vec![0.0; n];
        for (a, &j) in support.iter().enumerate() {
            w[j] = sol[a].max(0.0);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        best = best.min(sse(&w));
    }
    best
}
