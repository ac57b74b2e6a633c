use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{OutcomeSpec, PanelDataset};

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        if self.end < self.start {
            0
        } else {
            (self.end - self.start + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn iter(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

impl std::fmt::Display for YearRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop any donor with a gap in the fit or evaluation window.
    DropUnit,
    /// Drop donors with no fit-window data or any evaluation-window gap, then
    /// advance the fit start past leading gaps.
    ShrinkWindow,
}

/// Donor pool used when a control unit plays the treated role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceboPool {
    /// Remaining donors only.
    #[default]
    ExcludeTreated,
    /// Remaining donors plus the truly treated unit.
    IncludeTreated,
}

fn default_cutoff() -> f64 {
    10.0
}

/// Declarative description of one synthetic control study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub outcome: OutcomeSpec,
    pub treated: String,
    pub donors: Vec<String>,
    /// `[t_start, T0]`; the end is the treatment year.
    pub fit_years: YearRange,
    /// `(T0, t_end]`.
    pub eval_years: YearRange,
    pub missing_policy: MissingPolicy,
    #[serde(default = "default_cutoff")]
    pub mspe_cutoff: f64,
    #[serde(default)]
    pub placebo_pool: PlaceboPool,
    /// Also rank only the placebos that pass the MSPE filter.
    #[serde(default)]
    pub filtered_pvalue: bool,
    /// Compute the p-value under both placebo pool conventions.
    #[serde(default)]
    pub compare_placebo_pools: bool,
}

impl StudyConfig {
    pub fn treatment_year(&self) -> i32 {
        self.fit_years.end
    }

    pub fn validate(&self) -> Result<()> {
        self.outcome.validate()?;
        if self.donors.is_empty() {
            return Err(Error::Config("donor pool is empty".into()));
        }
        if self.donors.iter().any(|d| d == &self.treated) {
            return Err(Error::Config(format!(
                "treated unit {} is also listed as a donor",
                self.treated
            )));
        }
        let unique: BTreeSet<&String> = self.donors.iter().collect();
        if unique.len() != self.donors.len() {
            return Err(Error::Config("donor pool lists a unit twice".into()));
        }
        if self.fit_years.len() < 2 {
            return Err(Error::Config(format!(
                "fit window {} needs at least two years",
                self.fit_years
            )));
        }
        if self.eval_years.is_empty() {
            return Err(Error::Config(format!(
                "evaluation window {} is empty",
                self.eval_years
            )));
        }
        if self.eval_years.start <= self.fit_years.end {
            return Err(Error::Config(format!(
                "evaluation window {} must start after the fit window {}",
                self.eval_years, self.fit_years
            )));
        }
        if !(self.mspe_cutoff.is_finite() && self.mspe_cutoff > 0.0) {
            return Err(Error::Config(format!(
                "mspe cutoff must be positive, got {}",
                self.mspe_cutoff
            )));
        }
        Ok(())
    }

    /// Checks every referenced unit, series and year against `data`.
    pub fn validate_against(&self, data: &PanelDataset) -> Result<()> {
        self.validate()?;
        for unit in std::iter::once(&self.treated).chain(&self.donors) {
            if !data.has_unit(unit) {
                return Err(Error::UnknownUnit(unit.clone()));
            }
        }
        for series in self.outcome.series() {
            if !data.has_series(series) {
                return Err(Error::UnknownSeries(series.to_string()));
            }
        }
        for year in self.fit_years.iter().chain(self.eval_years.iter()) {
            if data.years().binary_search(&year).is_err() {
                return Err(Error::UnknownYear(year));
            }
        }
        Ok(())
    }

    /// Copy of this config with `unit` in the treated role.
    pub(crate) fn with_treated(&self, unit: &str, donors: Vec<String>) -> Self {
        Self {
            treated: unit.to_string(),
            donors,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base() -> StudyConfig {
        StudyConfig {
            outcome: OutcomeSpec::level("gdp", "rgdppc"),
            treated: "SWE".into(),
            donors: vec!["DNK".into(), "NOR".into()],
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
    fn valid_config_passes() {
        base().validate().unwrap();
        assert_eq!(base().treatment_year(), 1887);
    }

    #[test]
    fn invariants_are_enforced() {
        let mut c = base();
        c.donors.push("SWE".into());
        assert!(c.validate().is_err());

        let mut c = base();
        c.donors.push("DNK".into());
        assert!(c.validate().is_err());

        let mut c = base();
        c.donors.clear();
        assert!(c.validate().is_err());

        let mut c = base();
        c.eval_years = YearRange::new(1887, 1890);
        assert!(c.validate().is_err());

        let mut c = base();
        c.fit_years = YearRange::new(1887, 1887);
        assert!(c.validate().is_err());

        let mut c = base();
        c.mspe_cutoff = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_defaults() {
        let json = r#"{
            "outcome": {"name": "gdp", "kind": "level", "numerator": "rgdppc"},
            "treated": "SWE", "donors": ["DNK"],
            "fit_years": {"start": 1870, "end": 1887},
            "eval_years": {"start": 1888, "end": 1890},
            "missing_policy": "shrink_window"
        }"#;
        let c: StudyConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.mspe_cutoff, 10.0);
        assert_eq!(c.placebo_pool, PlaceboPool::ExcludeTreated);
        assert_eq!(c.missing_policy, MissingPolicy::ShrinkWindow);
    }
}
