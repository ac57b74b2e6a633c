//! Synthetic trajectories and treated-minus-synthetic gaps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::StudyConfig;
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::matrices::{build_matrices, StudyMatrices};
use crate::panel::PanelDataset;
use crate::solver::{fit_weights, WeightVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    /// Fit years followed by evaluation years.
    pub years: Vec<i32>,
    pub treated: Vec<f64>,
    pub synthetic: Vec<f64>,
    pub gap: Vec<f64>,
    /// Leading entries that belong to the fit window.
    pub fit_periods: usize,
    pub pre_mspe: f64,
    pub pre_rmspe: f64,
    pub post_mspe: f64,
    pub post_rmspe: f64,
}

fn mean_square(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|g| g * g).sum::<f64>() / values.len() as f64
}

impl GapSeries {
    pub fn fit_gaps(&self) -> &[f64] {
        &self.gap[..self.fit_periods]
    }

    pub fn eval_gaps(&self) -> &[f64] {
        &self.gap[self.fit_periods..]
    }

    pub fn eval_years(&self) -> &[i32] {
        &self.years[self.fit_periods..]
    }

    pub fn at(&self, year: i32) -> Option<(f64, f64, f64)> {
        let i = self.years.iter().position(|&y| y == year)?;
        Some((self.treated[i], self.synthetic[i], self.gap[i]))
    }

    /// `year,treated,synthetic,gap`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,treated,synthetic,gap\n");
        for i in 0..self.years.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.years[i],
                sig6(self.treated[i]),
                sig6(self.synthetic[i]),
                sig6(self.gap[i])
            ));
        }
        out
    }
}

/// Applies `weights` to the donor matrix (rows = `years`) and forms gaps.
pub fn synthesize(
    weights: &WeightVector,
    donor_ids: &[String],
    donors: &DMatrix<f64>,
    treated: &[f64],
    years: &[i32],
    fit_periods: usize,
) -> Result<GapSeries> {
    if weights.donors != donor_ids {
        return Err(Error::Solver(format!(
            "weights cover donors {:?} but the matrix has {:?}",
            weights.donors, donor_ids
        )));
    }
    if donors.ncols() != donor_ids.len() || donors.nrows() != years.len() || treated.len() != years.len() {
        return Err(Error::Solver("donor matrix, treated series and years disagree in shape".into()));
    }
    if fit_periods > years.len() {
        return Err(Error::Solver("fit window longer than the series".into()));
    }
    let synthetic: Vec<f64> = (0..years.len())
        .map(|t| (0..donors.ncols()).map(|j| weights.weights[j] * donors[(t, j)]).sum())
        .collect();
    let gap: Vec<f64> = treated.iter().zip(&synthetic).map(|(a, s)| a - s).collect();
    let pre_mspe = mean_square(&gap[..fit_periods]);
    let post_mspe = mean_square(&gap[fit_periods..]);
    Ok(GapSeries {
        years: years.to_vec(),
        treated: treated.to_vec(),
        synthetic,
        fit_periods,
        pre_mspe,
        pre_rmspe: pre_mspe.sqrt(),
        post_mspe,
        post_rmspe: post_mspe.sqrt(),
        gap,
    })
}

/// [`synthesize`] over a study's full fit and evaluation windows.
pub fn synthesize_study(weights: &WeightVector, m: &StudyMatrices) -> Result<GapSeries> {
    synthesize(
        weights,
        &m.donors,
        &m.donors_all(),
        &m.treated_all(),
        &m.years(),
        m.fit_years.len(),
    )
}

/// One fitted study: matrices, weights and gaps.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub matrices: StudyMatrices,
    pub weights: WeightVector,
    pub gaps: GapSeries,
}

pub fn estimate(data: &PanelDataset, config: &StudyConfig) -> Result<Estimate> {
    let matrices = build_matrices(data, config)?;
    let weights = fit_weights(&matrices.donors, &matrices.treated_fit, &matrices.donor_fit)?;
    let gaps = synthesize_study(&weights, &matrices)?;
    Ok(Estimate { matrices, weights, gaps })
}
