//! Robustness checks: backdated treatment and leave-one-out donor exclusion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{StudyConfig, YearRange};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::gaps::{estimate, GapSeries};
use crate::inference::{run_inference, InferenceReport, SkippedRun};
use crate::matrices::build_matrices;
use crate::panel::PanelDataset;
use crate::solver::WeightVector;

/// Donors at or below this weight are not re-estimated without.
pub const POSITIVE_WEIGHT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub base: StudyConfig,
    /// Fake treatment year, at most the true one.
    pub placebo_year: i32,
    /// Last evaluation year; defaults to the true treatment year when
    /// backdating.
    #[serde(default)]
    pub post_window_end: Option<i32>,
}

impl BacktestConfig {
    pub fn new(base: StudyConfig, placebo_year: i32) -> Self {
        Self {
            base,
            placebo_year,
            post_window_end: None,
        }
    }

    pub fn is_backdated(&self) -> bool {
        self.placebo_year < self.base.treatment_year()
    }

    /// The study config with windows moved to the placebo year.
    pub fn backdated_config(&self) -> Result<StudyConfig> {
        let true_t0 = self.base.treatment_year();
        let start = self.base.fit_years.start;
        if self.placebo_year > true_t0 {
            return Err(Error::Config(format!(
                "placebo year {} is after the treatment year {true_t0}",
                self.placebo_year
            )));
        }
        if self.placebo_year - start + 1 < 2 {
            return Err(Error::Config(format!(
                "placebo year {} leaves fewer than two fit years after {start}",
                self.placebo_year
            )));
        }
        let mut config = self.base.clone();
        if !self.is_backdated() {
            if let Some(end) = self.post_window_end {
                config.eval_years.end = end;
            }
            config.validate()?;
            return Ok(config);
        }
        let end = self.post_window_end.unwrap_or(true_t0);
        if end > true_t0 {
            return Err(Error::Config(format!(
                "backdated evaluation window must end by the treatment year {true_t0}, got {end}"
            )));
        }
        if end <= self.placebo_year {
            return Err(Error::Config(format!(
                "backdated evaluation window ({}, {end}] is empty",
                self.placebo_year
            )));
        }
        config.fit_years = YearRange::new(start, self.placebo_year);
        config.eval_years = YearRange::new(self.placebo_year + 1, end);
        config.validate()?;
        Ok(config)
    }
}

/// Full inference pipeline on the backdated windows.
pub fn in_time_placebo(data: &PanelDataset, backtest: &BacktestConfig) -> Result<InferenceReport> {
    let config = backtest.backdated_config()?;
    let mut report = run_inference(data, &config)?;
    report.metadata.backdated = backtest.is_backdated();
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct LeaveOneOutResult {
    pub excluded: String,
    pub weights: WeightVector,
    pub gaps: GapSeries,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LeaveOneOut {
    pub results: Vec<LeaveOneOutResult>,
    pub skipped: Vec<SkippedRun>,
}

impl LeaveOneOut {
    /// `excluded_donor,year,synthetic`
    pub fn gaps_csv(&self) -> String {
        let mut out = String::from("excluded_donor,year,synthetic\n");
        for r in &self.results {
            for (year, synth) in r.gaps.years.iter().zip(&r.gaps.synthetic) {
                out.push_str(&format!("{},{},{}\n", r.excluded, year, sig6(*synth)));
            }
        }
        out
    }
}

/// Re-estimates the study once per donor with positive base weight, each
/// time on the pool without that donor and on the same fit window.
pub fn leave_one_out(data: &PanelDataset, config: &StudyConfig, base: &WeightVector) -> Result<LeaveOneOut> {
    let main = build_matrices(data, config)?;
    if base.donors != main.donors {
        return Err(Error::Config(format!(
            "base weights cover {:?}, the study pool is {:?}",
            base.donors, main.donors
        )));
    }
    let mut influential: Vec<&String> = base
        .donors
        .iter()
        .zip(&base.weights)
        .filter(|(_, w)| **w > POSITIVE_WEIGHT_THRESHOLD)
        .map(|(d, _)| d)
        .collect();
    influential.sort();

    let outcomes: Vec<(String, Result<LeaveOneOutResult>)> = influential
        .par_iter()
        .map(|&excluded| {
            let donors: Vec<String> = main.donors.iter().filter(|d| *d != excluded).cloned().collect();
            let result = if donors.is_empty() {
                Err(Error::Config("no donors remain after the exclusion".into()))
            } else {
                let mut reduced = config.clone();
                reduced.donors = donors;
                reduced.fit_years = main.fit_years;
                estimate(data, &reduced).map(|est| LeaveOneOutResult {
                    excluded: excluded.clone(),
                    weights: est.weights,
                    gaps: est.gaps,
                })
            };
            (excluded.clone(), result)
        })
        .collect();

    let mut out = LeaveOneOut::default();
    for (unit, result) in outcomes {
        match result {
            Ok(r) => out.results.push(r),
            Err(err) => out.skipped.push(SkippedRun {
                unit,
                reason: err.to_string(),
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MissingPolicy, PlaceboPool};
    use crate::panel::OutcomeSpec;

    fn config() -> StudyConfig {
        StudyConfig {
            outcome: OutcomeSpec::level("y", "y"),
            treated: "T".into(),
            donors: vec!["A".into(), "B".into()],
            fit_years: YearRange::new(1870, 1887),
            eval_years: YearRange::new(1888, 1890),
            missing_policy: MissingPolicy::DropUnit,
            mspe_cutoff: 10.0,
            placebo_pool: PlaceboPool::ExcludeTreated,
            filtered_pvalue: false,
            compare_placebo_pools: false,
        }
    }

    #[test]
    fn backdating_moves_both_windows() {
        let c = BacktestConfig::new(config(), 1884).backdated_config().unwrap();
        assert_eq!(c.fit_years, YearRange::new(1870, 1884));
        assert_eq!(c.eval_years, YearRange::new(1885, 1887));
    }

    #[test]
    fn backdating_precondition_errors() {
        assert!(BacktestConfig::new(config(), 1870).backdated_config().is_err());
        assert!(BacktestConfig::new(config(), 1888).backdated_config().is_err());
        let mut bt = BacktestConfig::new(config(), 1884);
        bt.post_window_end = Some(1889);
        assert!(bt.backdated_config().is_err());
        bt.post_window_end = Some(1884);
        assert!(bt.backdated_config().is_err());
        assert!(BacktestConfig::new(config(), 1871).backdated_config().is_ok());
    }

    #[test]
    fn true_treatment_year_is_the_base_study() {
        let bt = BacktestConfig::new(config(), 1887);
        assert!(!bt.is_backdated());
        assert_eq!(bt.backdated_config().unwrap(), config());
    }
}
