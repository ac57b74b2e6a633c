//! Simplex-constrained least squares for synthetic control weights.
//!
//! Solves
//!
//! ```text
//!     minimize    ||y - X w||^2 + eps ||w||^2
//!     subject to  w >= 0,  sum(w) = 1
//! ```
//!
//! with a primal active-set method. Each iteration solves the equality
//! constrained subproblem on the free coordinates in the null space of the
//! sum constraint (Helmert basis) by SVD least squares, so rank-deficient
//! donor sets resolve to the minimum-norm step. Problems with at most
//! three donors are also solved by enumerating every support, and the better
//! of the two answers is kept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::dec6;

/// Ridge weight relative to the mean diagonal of `X'X`.
pub const RIDGE_EPSILON: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 10_000;
/// Stop when an iteration improves the objective by less than this
/// (relative to `max(1, objective)`).
pub const MIN_IMPROVEMENT: f64 = 1e-12;
/// Largest donor count for the enumeration cross-check.
pub const ENUMERATION_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ActiveSet,
    Enumeration,
}

/// Donor weights on the probability simplex plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub donors: Vec<String>,
    pub weights: Vec<f64>,
    /// Pre-treatment sum of squared residuals (ridge term excluded).
    pub objective: f64,
    pub pre_mspe: f64,
    pub pre_rmspe: f64,
    pub fit_periods: usize,
    /// Absolute ridge weight applied during the solve.
    pub ridge: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

impl WeightVector {
    pub fn weight(&self, donor: &str) -> Option<f64> {
        self.donors
            .iter()
            .position(|d| d == donor)
            .map(|i| self.weights[i])
    }

    /// Donors with weight strictly above `threshold`, in pool order.
    pub fn support(&self, threshold: f64) -> Vec<&str> {
        self.donors
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > threshold)
            .map(|(d, _)| d.as_str())
            .collect()
    }

    /// `donor,weight` rows sorted by donor id, weights to six decimals.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(&String, f64)> = self.donors.iter().zip(self.weights.iter().copied()).collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::from("donor,weight\n");
        for (d, w) in rows {
            out.push_str(&format!("{d},{}\n", dec6(w)));
        }
        out
    }
}

/// Sum of squared residuals of `y - X w`.
pub fn sum_squared_residuals(treated: &[f64], donors: &DMatrix<f64>, weights: &[f64]) -> f64 {
    (0..donors.nrows())
        .map(|t| {
            let fitted: f64 = (0..donors.ncols()).map(|j| donors[(t, j)] * weights[j]).sum();
            (treated[t] - fitted).powi(2)
        })
        .sum()
}

struct Problem<'a> {
    y: &'a DVector<f64>,
    x: &'a DMatrix<f64>,
    /// `X'X + eps I`
    gram: DMatrix<f64>,
    /// `X'y`
    xty: DVector<f64>,
    ridge: f64,
    scale: f64,
}

impl<'a> Problem<'a> {
    fn new(y: &'a DVector<f64>, x: &'a DMatrix<f64>) -> Self {
        let n = x.ncols();
        let mut gram = x.transpose() * x;
        let mean_diag = gram.diagonal().sum() / n as f64;
        let ridge = RIDGE_EPSILON * mean_diag;
        for j in 0..n {
            gram[(j, j)] += ridge;
        }
        let xty = x.transpose() * y;
        let scale = mean_diag.max(f64::MIN_POSITIVE);
        Self { y, x, gram, xty, ridge, scale }
    }

    fn n(&self) -> usize {
        self.x.ncols()
    }

    /// Penalized objective.
    fn objective(&self, w: &DVector<f64>) -> f64 {
        let r = self.y - self.x * w;
        r.norm_squared() + self.ridge * w.norm_squared()
    }

    /// Gradient of the penalized objective, halved.
    fn half_gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.gram * w - &self.xty
    }

    /// Minimizes the penalized objective over `w_free` with `sum(w_free) = 1`
    /// and all other coordinates at zero.
    fn solve_free(&self, free: &[usize]) -> DVector<f64> {
        let k = free.len();
        let mut w = DVector::zeros(self.n());
        if k == 1 {
            w[free[0]] = 1.0;
            return w;
        }
        let basis = helmert_basis(k);
        let x_free = DMatrix::from_fn(self.x.nrows(), k, |r, c| self.x[(r, free[c])]);
        let center = DVector::from_element(k, 1.0 / k as f64);
        let rows = self.x.nrows();
        let sqrt_ridge = self.ridge.sqrt();

        let projected = &x_free * &basis;
        let mut a = DMatrix::zeros(rows + k, k - 1);
        a.rows_mut(0, rows).copy_from(&projected);
        a.rows_mut(rows, k).copy_from(&(&basis * sqrt_ridge));
        let mut b = DVector::zeros(rows + k);
        b.rows_mut(0, rows).copy_from(&(self.y - &x_free * &center));
        b.rows_mut(rows, k).copy_from(&(&center * -sqrt_ridge));

        let svd = a.svd(true, true);
        let top = svd.singular_values.max();
        let cutoff = top * 1e-13 * (rows + k) as f64;
        let z = svd
            .solve(&b, cutoff)
            .expect("both singular vector sets were computed");
        let v = center + basis * z;
        for (c, &j) in free.iter().enumerate() {
            w[j] = v[c];
        }
        w
    }
}

/// Orthonormal basis of `{v : sum(v) = 0}` in `R^k`, one column per
/// Helmert contrast.
fn helmert_basis(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k - 1, |r, c| {
        let j = c + 1;
        let norm = ((j * (j + 1)) as f64).sqrt();
        if r < j {
            1.0 / norm
        } else if r == j {
            -(j as f64) / norm
        } else {
            0.0
        }
    })
}

fn check_inputs(treated: &[f64], donors: &DMatrix<f64>) -> Result<()> {
    if donors.ncols() == 0 {
        return Err(Error::Solver("empty donor set".into()));
    }
    if donors.nrows() < 2 {
        return Err(Error::Solver(format!(
            "need at least 2 fit periods, got {}",
            donors.nrows()
        )));
    }
    if treated.len() != donors.nrows() {
        return Err(Error::Solver(format!(
            "treated series has {} periods, donor matrix {}",
            treated.len(),
            donors.nrows()
        )));
    }
    if treated.iter().chain(donors.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite input".into()));
    }
    Ok(())
}

struct Solution {
    weights: DVector<f64>,
    iterations: usize,
}

fn active_set(problem: &Problem<'_>) -> Result<Solution> {
    let n = problem.n();
    // Start from the best single donor; ties go to the lowest index.
    let mut best = 0;
    let mut best_obj = f64::INFINITY;
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let obj = problem.objective(&e);
        if obj < best_obj {
            best = j;
            best_obj = obj;
        }
    }
    let mut w = DVector::zeros(n);
    w[best] = 1.0;
    let mut free = vec![best];
    let mut objective = best_obj;
    let mut last_added: Option<usize> = None;
    let tol = 1e-10 * problem.scale;

    for iteration in 1..=MAX_ITERATIONS {
        let candidate = problem.solve_free(&free);
        let blocked = free.iter().any(|&j| candidate[j] <= 0.0);
        if !blocked {
            let new_obj = problem.objective(&candidate);
            let improvement = objective - new_obj;
            if last_added.is_some() && improvement < MIN_IMPROVEMENT * objective.max(1.0) {
                // Releasing the last constraint did not help; keep the
                // current point.
                return Ok(Solution { weights: w, iterations: iteration });
            }
            w = candidate;
            objective = new_obj.min(objective);

            let grad = problem.half_gradient(&w);
            let shift = free.iter().map(|&j| grad[j]).sum::<f64>() / free.len() as f64;
            let entering = (0..n)
                .filter(|j| !free.contains(j))
                .map(|j| (j, grad[j] - shift))
                .fold(None, |acc: Option<(usize, f64)>, (j, m)| match acc {
                    Some((_, best)) if best <= m => acc,
                    _ => Some((j, m)),
                });
            match entering {
                Some((j, multiplier)) if multiplier < -tol => {
                    free.push(j);
                    free.sort_unstable();
                    last_added = Some(j);
                }
                _ => return Ok(Solution { weights: w, iterations: iteration }),
            }
        } else {
            // Move toward the candidate until the first free weight hits zero.
            let mut step = f64::INFINITY;
            let mut blocking = free[0];
            for &j in &free {
                if candidate[j] <= 0.0 {
                    let ratio = w[j] / (w[j] - candidate[j]);
                    if ratio < step {
                        step = ratio;
                        blocking = j;
                    }
                }
            }
            if step <= 0.0 && last_added == Some(blocking) {
                // The released constraint is not a descent direction.
                return Ok(Solution { weights: w, iterations: iteration });
            }
            let step = step.clamp(0.0, 1.0);
            for &j in &free {
                w[j] += step * (candidate[j] - w[j]);
            }
            w[blocking] = 0.0;
            free.retain(|&j| j != blocking && w[j] > 0.0);
            if free.is_empty() {
                return Err(Error::Solver("active set lost every free donor".into()));
            }
            for j in 0..n {
                if !free.contains(&j) {
                    w[j] = 0.0;
                }
            }
            renormalize(&mut w);
            objective = problem.objective(&w);
            last_added = None;
        }
    }
    Err(Error::Solver(format!(
        "no convergence after {MAX_ITERATIONS} iterations"
    )))
}

fn renormalize(w: &mut DVector<f64>) {
    for v in w.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total = w.sum();
    if total > 0.0 {
        *w /= total;
    }
}

/// Exact solve by trying every support. Each support's equality-constrained
/// problem is solved from its KKT system by Gaussian elimination.
fn enumerate_supports(problem: &Problem<'_>) -> Option<DVector<f64>> {
    let n = problem.n();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1usize..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let k = support.len();
        // [G_SS 1; 1' 0] [w; nu] = [X_S'y; 1]
        let mut kkt = vec![vec![0.0; k + 2]; k + 1];
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                kkt[r][c] = problem.gram[(i, j)];
            }
            kkt[r][k] = 1.0;
            kkt[r][k + 1] = problem.xty[i];
            kkt[k][r] = 1.0;
        }
        kkt[k][k + 1] = 1.0;
        let Some(sol) = gaussian_solve(kkt) else { continue };
        if sol[..k].iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut w = DVector::zeros(n);
        for (c, &j) in support.iter().enumerate() {
            w[j] = sol[c];
        }
        renormalize(&mut w);
        let obj = problem.objective(&w);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, w));
        }
    }
    best.map(|(_, w)| w)
}

/// Solves an augmented system `[A | b]` with partial pivoting.
fn gaussian_solve(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = m.len();
    let scale = m
        .iter()
        .flat_map(|row| row[..n].iter())
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for c in col..=n {
                    m[row][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (m[row][n] - s) / m[row][row];
    }
    Some(x)
}

/// Fits synthetic control weights on the fit window.
///
/// `treated` holds the treated unit's fit-window outcomes and `donors` one
/// column per donor with the same rows. Identical inputs give bitwise
/// identical output.
pub fn fit_weights(donor_ids: &[String], treated: &[f64], donors: &DMatrix<f64>) -> Result<WeightVector> {
    check_inputs(treated, donors)?;
    if donor_ids.len() != donors.ncols() {
        return Err(Error::Solver(format!(
            "{} donor ids for {} donor columns",
            donor_ids.len(),
            donors.ncols()
        )));
    }
    let y = DVector::from_column_slice(treated);
    let problem = Problem::new(&y, donors);
    let mut solution = active_set(&problem)?;
    let mut method = SolveMethod::ActiveSet;
    if problem.n() <= ENUMERATION_LIMIT {
        if let Some(exact) = enumerate_supports(&problem) {
            let current = problem.objective(&solution.weights);
            let exact_obj = problem.objective(&exact);
            if exact_obj < current - MIN_IMPROVEMENT * current.max(1.0) {
                solution.weights = exact;
                method = SolveMethod::Enumeration;
            }
        }
    }
    let mut w = solution.weights;
    renormalize(&mut w);
    let weights: Vec<f64> = w.iter().copied().collect();
    let objective = sum_squared_residuals(treated, donors, &weights);
    let pre_mspe = objective / treated.len() as f64;
    Ok(WeightVector {
        donors: donor_ids.to_vec(),
        weights,
        objective,
        pre_mspe,
        pre_rmspe: pre_mspe.sqrt(),
        fit_periods: treated.len(),
        ridge: problem.ridge,
        method,
        iterations: solution.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("D{i}")).collect()
    }

    fn matrix(cols: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(cols[0].len(), cols.len(), |r, c| cols[c][r])
    }

    #[test]
    fn helmert_columns_are_orthonormal_contrasts() {
        let h = helmert_basis(5);
        let gram = h.transpose() * &h;
        for i in 0..4 {
            assert!((h.column(i).sum()).abs() < 1e-15);
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_vertex_match() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 1.0, 5.0, 3.0];
        let w = fit_weights(&ids(2), &a, &matrix(&[&a, &b])).unwrap();
        assert_eq!(w.weights, [1.0, 0.0]);
        assert!(w.objective < 1e-20);
    }

    #[test]
    fn exact_convex_combination() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [3.0, 1.0, 2.0, 7.0];
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
        let w = fit_weights(&ids(2), &y, &matrix(&[&a, &b])).unwrap();
        assert!((w.weights[0] - 0.3).abs() < 1e-9, "{:?}", w.weights);
        assert!((w.weights[1] - 0.7).abs() < 1e-9);
        assert!(w.objective < 1e-18);
    }

    #[test]
    fn interior_optimum_with_many_donors() {
        // y lies inside the hull of five donors over eight periods
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|j| (0..8).map(|t| ((t * 7 + j * 3) % 11) as f64 + j as f64 * 0.5).collect())
            .collect();
        let truth = [0.1, 0.25, 0.0, 0.4, 0.25];
        let y: Vec<f64> = (0..8)
            .map(|t| (0..5).map(|j| truth[j] * cols[j][t]).sum())
            .collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let w = fit_weights(&ids(5), &y, &matrix(&refs)).unwrap();
        assert!(w.objective < 1e-16, "objective {}", w.objective);
        for (got, want) in w.weights.iter().zip(truth) {
            assert!((got - want).abs() < 1e-7, "{:?}", w.weights);
        }
    }

    #[test]
    fn duplicated_donor_splits_evenly() {
        let a = [1.0, 3.0, 2.0];
        let b = [5.0, 1.0, 4.0];
        let w = fit_weights(&ids(3), &a, &matrix(&[&a, &a, &b])).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-6, "{:?}", w.weights);
        assert!((w.weights[1] - 0.5).abs() < 1e-6);
        assert!(w.weights[2].abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs_are_refused() {
        let one = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(fit_weights(&ids(2), &[1.0], &one).is_err());
        let none = DMatrix::<f64>::zeros(3, 0);
        assert!(fit_weights(&[], &[1.0, 2.0, 3.0], &none).is_err());
        let nan = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(fit_weights(&ids(1), &[1.0, 2.0], &nan).is_err());
        let ok = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(fit_weights(&ids(2), &[1.0, 2.0], &ok).is_err());
    }

    #[test]
    fn weights_csv_is_sorted() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 1.0, 5.0];
        let mut w = fit_weights(&["ZZZ".into(), "AAA".into()], &a, &matrix(&[&a, &b])).unwrap();
        w.weights = vec![0.25, 0.75];
        assert_eq!(w.to_csv(), "donor,weight\nAAA,0.750000\nZZZ,0.250000\n");
    }
}
