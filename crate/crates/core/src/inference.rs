//! Placebo-in-space permutation inference on post/pre RMSPE ratios.
//!
//! Every retained donor is treated in turn as if it had received the
//! intervention, giving a null distribution of gaps and ratios. The
//! p-value ranks the treated unit's ratio among all units with a defined
//! ratio, counting ties against the treated unit.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::config::{PlaceboPool, StudyConfig, YearRange};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::gaps::{estimate, Estimate, GapSeries};
use crate::matrices::{DroppedDonor, StudyMatrices};
use crate::panel::PanelDataset;
use crate::solver::{WeightVector, RIDGE_EPSILON};

#[derive(Debug, Clone, Serialize)]
pub struct PlaceboRun {
    pub unit: String,
    pub weights: WeightVector,
    pub gaps: GapSeries,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRun {
    pub unit: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PlaceboSet {
    pub runs: Vec<PlaceboRun>,
    pub skipped: Vec<SkippedRun>,
}

fn placebo_config(config: &StudyConfig, main: &StudyMatrices, unit: &str, pool: PlaceboPool) -> StudyConfig {
    let mut donors: Vec<String> = main.donors.iter().filter(|d| *d != unit).cloned().collect();
    if pool == PlaceboPool::IncludeTreated {
        donors.push(config.treated.clone());
    }
    let mut placebo = config.with_treated(unit, donors);
    placebo.fit_years = main.fit_years;
    placebo
}

/// Refits the study with each donor of `main` as the treated unit. Runs are
/// independent and are returned sorted by unit id.
pub fn run_placebos_for(
    data: &PanelDataset,
    config: &StudyConfig,
    main: &StudyMatrices,
    pool: PlaceboPool,
) -> PlaceboSet {
    let mut outcomes: Vec<(String, Result<Estimate>)> = main
        .donors
        .par_iter()
        .map(|unit| {
            let placebo = placebo_config(config, main, unit, pool);
            let result = if placebo.donors.is_empty() {
                Err(Error::Config("no controls remain".into()))
            } else {
                estimate(data, &placebo)
            };
            (unit.clone(), result)
        })
        .collect();
    outcomes.sort_by(|a, b| a.0.cmp(&b.0));

    let mut set = PlaceboSet::default();
    for (unit, result) in outcomes {
        match result {
            Ok(est) => set.runs.push(PlaceboRun {
                unit,
                weights: est.weights,
                gaps: est.gaps,
            }),
            Err(err) => set.skipped.push(SkippedRun {
                unit,
                reason: err.to_string(),
            }),
        }
    }
    set
}

/// Placebo runs for `config` under its own pool convention.
pub fn run_placebos(data: &PanelDataset, config: &StudyConfig) -> Result<PlaceboSet> {
    let main = crate::matrices::build_matrices(data, config)?;
    Ok(run_placebos_for(data, config, &main, config.placebo_pool))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterDecision {
    pub unit: String,
    pub pre_mspe: f64,
    /// Placebo pre-MSPE over the treated pre-MSPE; absent when the treated
    /// fit is perfect.
    pub multiple: Option<f64>,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutcome {
    pub decisions: Vec<FilterDecision>,
    /// The treated pre-MSPE is zero, so no multiple can be formed.
    pub degenerate_perfect_fit: bool,
}

impl FilterOutcome {
    pub fn retained(&self, unit: &str) -> Option<bool> {
        self.decisions.iter().find(|d| d.unit == unit).map(|d| d.retained)
    }
}

/// Keeps a placebo iff its pre-MSPE is below `cutoff` times the treated
/// pre-MSPE; "at least" the cutoff multiple is excluded.
pub fn mspe_filter(placebos: &[(&str, f64)], treated_pre_mspe: f64, cutoff: f64) -> Result<FilterOutcome> {
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(Error::Config(format!("mspe cutoff must be positive, got {cutoff}")));
    }
    if !(treated_pre_mspe.is_finite() && treated_pre_mspe >= 0.0) {
        return Err(Error::Data(format!("invalid treated pre-MSPE {treated_pre_mspe}")));
    }
    let degenerate = treated_pre_mspe == 0.0;
    let decisions = placebos
        .iter()
        .map(|&(unit, pre_mspe)| FilterDecision {
            unit: unit.to_string(),
            pre_mspe,
            multiple: (!degenerate).then(|| pre_mspe / treated_pre_mspe),
            retained: if degenerate {
                pre_mspe == 0.0
            } else {
                pre_mspe < cutoff * treated_pre_mspe
            },
        })
        .collect();
    Ok(FilterOutcome {
        decisions,
        degenerate_perfect_fit: degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub unit: String,
    pub treated: bool,
    pub pre_rmspe: f64,
    pub post_rmspe: f64,
    /// Undefined when the pre-treatment fit is perfect.
    pub ratio: Option<f64>,
}

fn ratio_row(unit: &str, treated: bool, gaps: &GapSeries) -> RatioRow {
    RatioRow {
        unit: unit.to_string(),
        treated,
        pre_rmspe: gaps.pre_rmspe,
        post_rmspe: gaps.post_rmspe,
        ratio: (gaps.pre_rmspe > 0.0).then(|| gaps.post_rmspe / gaps.pre_rmspe),
    }
}

/// Post/pre RMSPE ratio per unit, sorted by unit id.
pub fn rmspe_ratios(treated: (&str, &GapSeries), placebos: &[(&str, &GapSeries)]) -> Vec<RatioRow> {
    let mut rows: Vec<RatioRow> = std::iter::once(ratio_row(treated.0, true, treated.1))
        .chain(placebos.iter().map(|(u, g)| ratio_row(u, false, g)))
        .collect();
    rows.sort_by(|a, b| a.unit.cmp(&b.unit));
    rows
}

/// Exact permutation p-value `k / N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PValue {
    pub numerator: usize,
    pub denominator: usize,
}

impl PValue {
    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl std::fmt::Display for PValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl Serialize for PValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("PValue", 3)?;
        s.serialize_field("numerator", &self.numerator)?;
        s.serialize_field("denominator", &self.denominator)?;
        s.serialize_field("decimal", &self.value())?;
        s.end()
    }
}

/// Share of units whose ratio is at least the treated unit's. Units with an
/// undefined ratio are left out of both counts.
pub fn permutation_pvalue(rows: &[RatioRow]) -> Result<PValue> {
    let mut treated = rows.iter().filter(|r| r.treated);
    let row = treated
        .next()
        .ok_or_else(|| Error::Data("no treated unit among the ratios".into()))?;
    if treated.next().is_some() {
        return Err(Error::Data("more than one treated unit among the ratios".into()));
    }
    let target = row
        .ratio
        .ok_or_else(|| Error::Data(format!("treated unit {} has an undefined RMSPE ratio", row.unit)))?;
    let defined: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    Ok(PValue {
        numerator: defined.iter().filter(|&&r| r >= target).count(),
        denominator: defined.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceMetadata {
    pub placebo_pool: PlaceboPool,
    pub mspe_cutoff: f64,
    pub ridge_epsilon: f64,
    pub backdated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceReport {
    pub treated: String,
    pub donors: Vec<String>,
    pub dropped: Vec<DroppedDonor>,
    pub fit_years: YearRange,
    pub eval_years: YearRange,
    pub weights: WeightVector,
    pub treated_gap: GapSeries,
    pub placebos: Vec<PlaceboRun>,
    pub skipped: Vec<SkippedRun>,
    pub ratios: Vec<RatioRow>,
    pub filter: FilterOutcome,
    pub p_value: PValue,
    /// Treated unit ranked among placebos that pass the MSPE filter.
    pub filtered_p_value: Option<PValue>,
    /// p-value under the other placebo pool convention.
    pub alternative_pool_p_value: Option<PValue>,
    pub metadata: InferenceMetadata,
}

fn pvalue_for(est: &Estimate, placebos: &PlaceboSet) -> Result<(Vec<RatioRow>, PValue)> {
    let pairs: Vec<(&str, &GapSeries)> = placebos.runs.iter().map(|r| (r.unit.as_str(), &r.gaps)).collect();
    let ratios = rmspe_ratios((&est.matrices.treated, &est.gaps), &pairs);
    let p = permutation_pvalue(&ratios)?;
    Ok((ratios, p))
}

/// Fit, placebo runs, MSPE filter, ratios and p-value for one study.
pub fn run_inference(data: &PanelDataset, config: &StudyConfig) -> Result<InferenceReport> {
    let est = estimate(data, config)?;
    let placebos = run_placebos_for(data, config, &est.matrices, config.placebo_pool);
    let (ratios, p_value) = pvalue_for(&est, &placebos)?;

    let pre: Vec<(&str, f64)> = placebos.runs.iter().map(|r| (r.unit.as_str(), r.gaps.pre_mspe)).collect();
    let filter = mspe_filter(&pre, est.gaps.pre_mspe, config.mspe_cutoff)?;

    let filtered_p_value = if config.filtered_pvalue {
        let kept: Vec<RatioRow> = ratios
            .iter()
            .filter(|r| r.treated || filter.retained(&r.unit) == Some(true))
            .cloned()
            .collect();
        Some(permutation_pvalue(&kept)?)
    } else {
        None
    };

    let alternative_pool_p_value = if config.compare_placebo_pools {
        let other = match config.placebo_pool {
            PlaceboPool::ExcludeTreated => PlaceboPool::IncludeTreated,
            PlaceboPool::IncludeTreated => PlaceboPool::ExcludeTreated,
        };
        let alt = run_placebos_for(data, config, &est.matrices, other);
        Some(pvalue_for(&est, &alt)?.1)
    } else {
        None
    };

    Ok(InferenceReport {
        treated: est.matrices.treated.clone(),
        donors: est.matrices.donors.clone(),
        dropped: est.matrices.dropped.clone(),
        fit_years: est.matrices.fit_years,
        eval_years: est.matrices.eval_years,
        weights: est.weights,
        treated_gap: est.gaps,
        placebos: placebos.runs,
        skipped: placebos.skipped,
        ratios,
        filter,
        p_value,
        filtered_p_value,
        alternative_pool_p_value,
        metadata: InferenceMetadata {
            placebo_pool: config.placebo_pool,
            mspe_cutoff: config.mspe_cutoff,
            ridge_epsilon: RIDGE_EPSILON,
            backdated: false,
        },
    })
}

impl InferenceReport {
    pub fn treated_ratio(&self) -> Option<f64> {
        self.ratios.iter().find(|r| r.treated).and_then(|r| r.ratio)
    }

    /// Whether the treated unit has the strictly largest defined ratio.
    pub fn treated_ratio_is_max(&self) -> bool {
        let Some(t) = self.treated_ratio() else { return false };
        self.ratios
            .iter()
            .filter(|r| !r.treated)
            .filter_map(|r| r.ratio)
            .all(|r| r < t)
    }

    pub fn is_retained(&self, unit: &str) -> bool {
        unit == self.treated || self.filter.retained(unit).unwrap_or(false)
    }

    /// `unit,pre_rmspe,post_rmspe,ratio,retained_flag`
    pub fn ratios_csv(&self) -> String {
        let mut out = String::from("unit,pre_rmspe,post_rmspe,ratio,retained_flag\n");
        for r in &self.ratios {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.unit,
                sig6(r.pre_rmspe),
                sig6(r.post_rmspe),
                r.ratio.map(sig6).unwrap_or_default(),
                u8::from(self.is_retained(&r.unit))
            ));
        }
        out
    }

    /// `unit,year,gap` for every placebo run.
    pub fn placebo_gaps_csv(&self) -> String {
        let mut out = String::from("unit,year,gap\n");
        for run in &self.placebos {
            for (year, gap) in run.gaps.years.iter().zip(&run.gaps.gap) {
                out.push_str(&format!("{},{},{}\n", run.unit, year, sig6(*gap)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(unit: &str, treated: bool, ratio: Option<f64>) -> RatioRow {
        RatioRow {
            unit: unit.into(),
            treated,
            pre_rmspe: 1.0,
            post_rmspe: ratio.unwrap_or(0.0),
            ratio,
        }
    }

    #[test]
    fn filter_boundary_semantics() {
        let t = 0.37;
        let out = mspe_filter(&[("A", 9.99 * t), ("B", 10.0 * t)], t, 10.0).unwrap();
        assert!(out.decisions[0].retained);
        assert!(!out.decisions[1].retained);
        assert!(!out.degenerate_perfect_fit);
    }

    #[test]
    fn filter_fixture() {
        // treated 0.01, cutoff 10: threshold 0.1
        let out = mspe_filter(&[("A", 0.05), ("B", 0.09), ("C", 0.30)], 0.01, 10.0).unwrap();
        let kept: Vec<_> = out.decisions.iter().filter(|d| d.retained).map(|d| d.unit.as_str()).collect();
        assert_eq!(kept, ["A", "B"]);
        for d in out.decisions.iter().filter(|d| !d.retained) {
            assert!(d.pre_mspe >= 10.0 * 0.01);
        }
        assert!((out.decisions[2].multiple.unwrap() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn filter_with_perfect_treated_fit() {
        let out = mspe_filter(&[("A", 0.0), ("B", 0.2)], 0.0, 10.0).unwrap();
        assert!(out.degenerate_perfect_fit);
        assert!(out.decisions[0].retained);
        assert!(!out.decisions[1].retained);
        assert!(out.decisions.iter().all(|d| d.multiple.is_none()));
        assert!(mspe_filter(&[], 1.0, 0.0).is_err());
        assert!(mspe_filter(&[], -1.0, 10.0).is_err());
    }

    #[test]
    fn ratio_edge_cases() {
        let gaps = |pre: f64, post: f64| GapSeries {
            years: vec![1, 2],
            treated: vec![0.0; 2],
            synthetic: vec![0.0; 2],
            gap: vec![0.0; 2],
            fit_periods: 1,
            pre_mspe: pre * pre,
            pre_rmspe: pre,
            post_mspe: post * post,
            post_rmspe: post,
        };
        let zero_post = gaps(0.5, 0.0);
        let equal = gaps(0.7, 0.7);
        let perfect = gaps(0.0, 1.0);
        let rows = rmspe_ratios(("T", &zero_post), &[("B", &equal), ("A", &perfect)]);
        assert_eq!(rows.iter().map(|r| r.unit.as_str()).collect::<Vec<_>>(), ["A", "B", "T"]);
        assert_eq!(rows[0].ratio, None);
        assert_eq!(rows[1].ratio, Some(1.0));
        assert_eq!(rows[2].ratio, Some(0.0));
        // A is undefined: N = 2, and 0 <= 1 ranks the treated last
        assert_eq!(permutation_pvalue(&rows).unwrap(), PValue { numerator: 2, denominator: 2 });
    }

    #[test]
    fn pvalue_counts_ties_against_treated() {
        let rows = vec![row("T", true, Some(2.0)), row("A", false, Some(2.0)), row("B", false, Some(1.0))];
        assert_eq!(permutation_pvalue(&rows).unwrap().to_string(), "2/3");
    }

    #[test]
    fn pvalue_extremes() {
        let mut rows: Vec<RatioRow> = (0..8).map(|i| row(&format!("U{i}"), false, Some(1.0 + i as f64))).collect();
        rows.push(row("T", true, Some(100.0)));
        assert_eq!(permutation_pvalue(&rows).unwrap(), PValue { numerator: 1, denominator: 9 });
        rows.last_mut().unwrap().ratio = Some(0.5);
        let p = permutation_pvalue(&rows).unwrap();
        assert_eq!((p.numerator, p.denominator), (9, 9));
        assert_eq!(p.value(), 1.0);
        rows.last_mut().unwrap().ratio = None;
        assert!(permutation_pvalue(&rows).is_err());
    }

    #[test]
    fn pvalue_serializes_as_fraction() {
        let json = serde_json::to_string(&PValue { numerator: 1, denominator: 4 }).unwrap();
        assert_eq!(json, r#"{"numerator":1,"denominator":4,"decimal":0.25}"#);
    }
}
