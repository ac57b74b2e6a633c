//! Study-ready outcome matrices with the missing-data policy applied.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{MissingPolicy, StudyConfig, YearRange};
use crate::error::{Error, Result};
use crate::panel::{resolve_outcome, PanelDataset};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedDonor {
    pub unit: String,
    pub reason: String,
}

/// Treated vector and donor matrix (rows = years, columns = donors) over the
/// effective fit and evaluation windows. Contains no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyMatrices {
    pub treated: String,
    pub donors: Vec<String>,
    pub fit_years: YearRange,
    pub eval_years: YearRange,
    pub treated_fit: Vec<f64>,
    pub treated_eval: Vec<f64>,
    pub donor_fit: DMatrix<f64>,
    pub donor_eval: DMatrix<f64>,
    pub dropped: Vec<DroppedDonor>,
}

impl StudyMatrices {
    pub fn years(&self) -> Vec<i32> {
        self.fit_years.iter().chain(self.eval_years.iter()).collect()
    }

    pub fn treated_all(&self) -> Vec<f64> {
        [self.treated_fit.as_slice(), self.treated_eval.as_slice()].concat()
    }

    pub fn donors_all(&self) -> DMatrix<f64> {
        let fit = self.donor_fit.nrows();
        let mut out = DMatrix::zeros(fit + self.donor_eval.nrows(), self.donors.len());
        out.rows_mut(0, fit).copy_from(&self.donor_fit);
        out.rows_mut(fit, self.donor_eval.nrows())
            .copy_from(&self.donor_eval);
        out
    }
}

struct Series {
    unit: String,
    fit: Vec<Option<f64>>,
    eval: Vec<Option<f64>>,
}

impl Series {
    fn resolve(data: &PanelDataset, config: &StudyConfig, unit: &str) -> Result<Self> {
        let read = |range: YearRange| -> Result<Vec<Option<f64>>> {
            range
                .iter()
                .map(|y| resolve_outcome(data, &config.outcome, unit, y))
                .collect()
        };
        Ok(Self {
            unit: unit.to_string(),
            fit: read(config.fit_years)?,
            eval: read(config.eval_years)?,
        })
    }

    fn first_gap(values: &[Option<f64>], range: YearRange) -> Option<i32> {
        values.iter().position(Option::is_none).map(|i| range.start + i as i32)
    }

    fn last_fit_gap(&self, fit: YearRange) -> Option<i32> {
        self.fit.iter().rposition(Option::is_none).map(|i| fit.start + i as i32)
    }
}

fn years_list(values: &[Option<f64>], range: YearRange) -> String {
    values
        .iter()
        .zip(range.iter())
        .filter(|(v, _)| v.is_none())
        .map(|(_, y)| y.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Resolves the study outcome for the treated unit and donors and applies the
/// configured missing-data policy.
pub fn build_matrices(data: &PanelDataset, config: &StudyConfig) -> Result<StudyMatrices> {
    config.validate_against(data)?;
    let fit = config.fit_years;
    let eval = config.eval_years;
    let treated = Series::resolve(data, config, &config.treated)?;
    if let Some(year) = Series::first_gap(&treated.eval, eval) {
        return Err(Error::TreatedMissing { unit: treated.unit, year });
    }

    let mut dropped = Vec::new();
    let mut kept: Vec<Series> = Vec::new();
    for unit in &config.donors {
        let s = Series::resolve(data, config, unit)?;
        if Series::first_gap(&s.eval, eval).is_some() {
            dropped.push(DroppedDonor {
                reason: format!("missing in evaluation window: {}", years_list(&s.eval, eval)),
                unit: s.unit,
            });
            continue;
        }
        if config.missing_policy == MissingPolicy::DropUnit && s.fit.iter().any(Option::is_none) {
            dropped.push(DroppedDonor {
                reason: format!("missing in fit window: {}", years_list(&s.fit, fit)),
                unit: s.unit,
            });
            continue;
        }
        if s.fit.iter().all(Option::is_none) {
            dropped.push(DroppedDonor {
                unit: s.unit,
                reason: "no data in fit window".into(),
            });
            continue;
        }
        kept.push(s);
    }

    let mut start = fit.start;
    if config.missing_policy == MissingPolicy::ShrinkWindow {
        // The latest admissible start keeps two fit years.
        let latest = fit.end - 1;
        if let Some(year) = treated.last_fit_gap(fit) {
            if year + 1 > latest {
                return Err(Error::TreatedMissing { unit: treated.unit, year });
            }
            start = start.max(year + 1);
        }
        let mut retained = Vec::with_capacity(kept.len());
        for s in kept {
            match s.last_fit_gap(fit) {
                Some(year) if year + 1 > latest => dropped.push(DroppedDonor {
                    reason: format!("missing in {year}, too close to the treatment year to shrink past"),
                    unit: s.unit,
                }),
                Some(year) => {
                    start = start.max(year + 1);
                    retained.push(s);
                }
                None => retained.push(s),
            }
        }
        kept = retained;
    } else if let Some(year) = Series::first_gap(&treated.fit, fit) {
        return Err(Error::TreatedMissing { unit: treated.unit, year });
    }

    if kept.is_empty() {
        return Err(Error::NoDonors);
    }

    let skip = (start - fit.start) as usize;
    let fit_years = YearRange::new(start, fit.end);
    let unwrap_all = |v: &[Option<f64>]| -> Vec<f64> {
        v.iter().map(|x| x.expect("gaps removed by policy")).collect()
    };
    let donor_fit = DMatrix::from_fn(fit_years.len(), kept.len(), |r, c| {
        kept[c].fit[skip + r].expect("gaps removed by policy")
    });
    let donor_eval = DMatrix::from_fn(eval.len(), kept.len(), |r, c| {
        kept[c].eval[r].expect("gaps removed by policy")
    });
    Ok(StudyMatrices {
        treated_fit: unwrap_all(&treated.fit[skip..]),
        treated_eval: unwrap_all(&treated.eval),
        treated: treated.unit,
        donors: kept.into_iter().map(|s| s.unit).collect(),
        fit_years,
        eval_years: eval,
        donor_fit,
        donor_eval,
        dropped,
    })
}
