//! The bundled Sweden-1887 studies and their published targets.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::YearRange;
use crate::error::{Error, Result};
use crate::panel::{read_panel, PanelSchema};
use crate::rates::aagr;
use crate::study::{emit_bundle, run_bundle, sha256_hex, write_files_atomically, StudyBundle, StudyFile};

const STUDY_FILES: [(&str, &str); 4] = [
    ("gdp", include_str!("../studies/gdp.json")),
    ("imports", include_str!("../studies/imports.json")),
    ("revenue", include_str!("../studies/revenue.json")),
    ("expenditure", include_str!("../studies/expenditure.json")),
];

const EXPECTATIONS: &str = include_str!("../studies/expectations.json");

/// The four bundled study definitions, in a fixed order.
pub fn bundled_studies() -> Vec<StudyFile> {
    STUDY_FILES
        .iter()
        .map(|(_, text)| StudyFile::from_json(text).expect("bundled study files are valid"))
        .collect()
}

pub fn bundled_study(name: &str) -> Option<StudyFile> {
    bundled_studies().into_iter().find(|s| s.name == name)
}

pub fn expectations() -> Expectations {
    serde_json::from_str(EXPECTATIONS).expect("bundled expectations are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Treated,
    Synthetic,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ValueTarget {
    pub series: SeriesKind,
    pub year: i32,
    pub target: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GrowthTarget {
    pub series: SeriesKind,
    pub from: i32,
    pub to: i32,
    pub target: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct PValueTarget {
    pub numerator: usize,
    pub denominator: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BacktestTarget {
    pub placebo_year: i32,
    pub p_value: PValueTarget,
    pub treated_ratio_below_one: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StudyTargets {
    pub weights: BTreeMap<String, f64>,
    pub weight_tolerance: f64,
    pub support: Vec<String>,
    #[serde(default)]
    pub dropped: Vec<String>,
    #[serde(default)]
    pub placebo_runs: Option<usize>,
    #[serde(default)]
    pub leave_one_out_runs: Option<usize>,
    #[serde(default)]
    pub effective_fit_years: Option<YearRange>,
    #[serde(default)]
    pub p_value: Option<PValueTarget>,
    #[serde(default)]
    pub treated_ratio_is_max: Option<bool>,
    #[serde(default)]
    pub values: Vec<ValueTarget>,
    #[serde(default)]
    pub aagr: Vec<GrowthTarget>,
    #[serde(default)]
    pub backtest: Option<BacktestTarget>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Expectations {
    pub version: u32,
    pub frozen_vintage: String,
    pub vintage_note: String,
    pub support_threshold: f64,
    pub studies: BTreeMap<String, StudyTargets>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// A miss on a data vintage other than the frozen one.
    Warn,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub study: String,
    pub name: String,
    pub status: Status,
    pub observed: String,
    pub expected: String,
}

fn check(study: &str, name: String, ok: bool, observed: String, expected: String) -> Check {
    Check {
        study: study.to_string(),
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        observed,
        expected,
    }
}

fn series_value(bundle: &StudyBundle, kind: SeriesKind, year: i32) -> Option<f64> {
    let (treated, synthetic, _) = bundle.gaps().at(year)?;
    Some(match kind {
        SeriesKind::Treated => treated,
        SeriesKind::Synthetic => synthetic,
    })
}

fn near(observed: Option<f64>, target: f64, tolerance: f64) -> bool {
    observed.is_some_and(|v| (v - target).abs() <= tolerance)
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| format!("{v:.4}"))
}

/// Compares one study bundle with its targets. Every check is reported,
/// passing or not.
pub fn check_bundle(bundle: &StudyBundle, targets: &StudyTargets, support_threshold: f64) -> Vec<Check> {
    let study = bundle.study.name.as_str();
    let report = &bundle.inference;
    let weights = &report.weights;
    let mut out = Vec::new();

    let mut donors: Vec<&String> = weights.donors.iter().chain(targets.weights.keys()).collect();
    donors.sort();
    donors.dedup();
    for donor in donors {
        let observed = weights.weight(donor).unwrap_or(0.0);
        let target = targets.weights.get(donor).copied().unwrap_or(0.0);
        out.push(check(
            study,
            format!("weight {donor}"),
            (observed - target).abs() <= targets.weight_tolerance,
            format!("{observed:.3}"),
            format!("{target:.3} ± {}", targets.weight_tolerance),
        ));
    }

    let mut support: Vec<String> = weights.support(support_threshold).into_iter().map(String::from).collect();
    support.sort();
    let mut expected_support = targets.support.clone();
    expected_support.sort();
    out.push(check(
        study,
        "support".into(),
        support == expected_support,
        support.join(" "),
        expected_support.join(" "),
    ));

    let mut dropped: Vec<String> = report.dropped.iter().map(|d| d.unit.clone()).collect();
    dropped.sort();
    let mut expected_dropped = targets.dropped.clone();
    expected_dropped.sort();
    out.push(check(
        study,
        "dropped donors".into(),
        dropped == expected_dropped,
        dropped.join(" "),
        expected_dropped.join(" "),
    ));

    if let Some(window) = targets.effective_fit_years {
        out.push(check(
            study,
            "effective fit window".into(),
            report.fit_years == window,
            report.fit_years.to_string(),
            window.to_string(),
        ));
    }
    if let Some(n) = targets.placebo_runs {
        out.push(check(
            study,
            "placebo runs".into(),
            report.placebos.len() == n,
            report.placebos.len().to_string(),
            n.to_string(),
        ));
    }
    if let Some(p) = targets.p_value {
        let got = report.p_value;
        out.push(check(
            study,
            "p-value".into(),
            got.numerator == p.numerator && got.denominator == p.denominator,
            got.to_string(),
            format!("{}/{}", p.numerator, p.denominator),
        ));
    }
    if let Some(max) = targets.treated_ratio_is_max {
        out.push(check(
            study,
            "treated ratio is the largest".into(),
            report.treated_ratio_is_max() == max,
            report.treated_ratio_is_max().to_string(),
            max.to_string(),
        ));
    }
    for v in &targets.values {
        let observed = series_value(bundle, v.series, v.year);
        out.push(check(
            study,
            format!("{:?} {}", v.series, v.year).to_lowercase(),
            near(observed, v.target, v.tolerance),
            show(observed),
            format!("{} ± {}", v.target, v.tolerance),
        ));
    }
    for g in &targets.aagr {
        let observed = match (series_value(bundle, g.series, g.from), series_value(bundle, g.series, g.to)) {
            (Some(a), Some(b)) => aagr(a, b, (g.to - g.from) as u32).ok(),
            _ => None,
        };
        out.push(check(
            study,
            format!("{:?} growth {}-{}", g.series, g.from, g.to).to_lowercase(),
            near(observed, g.target, g.tolerance),
            show(observed),
            format!("{} ± {}", g.target, g.tolerance),
        ));
    }
    if let Some(n) = targets.leave_one_out_runs {
        let got = bundle.leave_one_out.as_ref().map(|l| l.results.len());
        out.push(check(
            study,
            "leave-one-out runs".into(),
            got == Some(n),
            got.map_or("not run".into(), |g| g.to_string()),
            n.to_string(),
        ));
    }
    if let Some(bt) = &targets.backtest {
        match &bundle.backtest {
            Some((config, r)) if config.placebo_year == bt.placebo_year => {
                out.push(check(
                    study,
                    format!("backtest {} p-value", bt.placebo_year),
                    r.p_value.numerator == bt.p_value.numerator && r.p_value.denominator == bt.p_value.denominator,
                    r.p_value.to_string(),
                    format!("{}/{}", bt.p_value.numerator, bt.p_value.denominator),
                ));
                let ratio = r.treated_ratio();
                out.push(check(
                    study,
                    format!("backtest {} treated ratio below one", bt.placebo_year),
                    ratio.is_some_and(|x| x < 1.0) == bt.treated_ratio_below_one,
                    show(ratio),
                    if bt.treated_ratio_below_one { "< 1" } else { ">= 1" }.into(),
                ));
            }
            _ => out.push(check(
                study,
                format!("backtest {}", bt.placebo_year),
                false,
                "not run".into(),
                "run".into(),
            )),
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyOutcome {
    pub study: String,
    /// Set when the study could not be run at all.
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub output_dir: Option<PathBuf>,
}

impl StudyOutcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationSummary {
    pub vintage: String,
    pub frozen_vintage: String,
    pub vintage_matches: bool,
    pub data_digest: String,
    pub studies: Vec<StudyOutcome>,
}

impl ReplicationSummary {
    pub fn passed(&self) -> bool {
        self.studies.iter().all(StudyOutcome::passed)
    }

    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.studies.iter().flat_map(|s| s.checks.iter())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("study,check,status,observed,expected\n");
        for s in &self.studies {
            if let Some(err) = &s.error {
                out.push_str(&format!("{},run,fail,{},\n", s.study, csv_field(err)));
            }
            for c in &s.checks {
                let status = match c.status {
                    Status::Pass => "pass",
                    Status::Fail => "fail",
                    Status::Warn => "warn",
                };
                out.push_str(&format!(
                    "{},{},{status},{},{}\n",
                    c.study,
                    csv_field(&c.name),
                    csv_field(&c.observed),
                    csv_field(&c.expected)
                ));
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Runs all bundled studies on the panel at `data_path`, writes each study's
/// outputs to `out_dir/<study>/` and a summary to `out_dir/summary.{json,csv}`.
///
/// A study that fails to run is recorded and the others still proceed. When
/// `vintage` differs from the frozen label, target misses are downgraded to
/// warnings.
pub fn replicate(data_path: impl AsRef<Path>, out_dir: impl AsRef<Path>, vintage: Option<&str>) -> Result<ReplicationSummary> {
    let data_path = data_path.as_ref();
    let out_dir = out_dir.as_ref();
    let bytes = fs::read(data_path).map_err(|e| Error::Data(format!("cannot read {}: {e}", data_path.display())))?;
    let digest = sha256_hex(&bytes);
    let expectations = expectations();
    let vintage = vintage.unwrap_or(&expectations.frozen_vintage).to_string();
    let vintage_matches = vintage == expectations.frozen_vintage;

    let studies = bundled_studies();
    let mut schemas: Vec<PanelSchema> = Vec::new();
    for s in &studies {
        if !schemas.contains(&s.schema) {
            schemas.push(s.schema.clone());
        }
    }
    let panels: Vec<(PanelSchema, Result<crate::panel::PanelDataset>)> = schemas
        .into_iter()
        .map(|schema| {
            let data = read_panel(bytes.as_slice(), &schema);
            (schema, data)
        })
        .collect();

    let outcomes: Vec<StudyOutcome> = studies
        .par_iter()
        .map(|study| {
            let (_, data) = panels.iter().find(|(s, _)| *s == study.schema).expect("schema loaded");
            let dir = out_dir.join(&study.name);
            let run = data
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|data| run_bundle(study, data, &digest).map_err(|e| e.to_string()))
                .and_then(|bundle| emit_bundle(&bundle, &dir).map(|_| bundle).map_err(|e| e.to_string()));
            match run {
                Ok(bundle) => {
                    let mut checks = match expectations.studies.get(&study.name) {
                        Some(t) => check_bundle(&bundle, t, expectations.support_threshold),
                        None => Vec::new(),
                    };
                    if !vintage_matches {
                        for c in &mut checks {
                            if c.status == Status::Fail {
                                c.status = Status::Warn;
                            }
                        }
                    }
                    StudyOutcome { study: study.name.clone(), error: None, checks, output_dir: Some(dir) }
                }
                Err(error) => StudyOutcome { study: study.name.clone(), error: Some(error), checks: Vec::new(), output_dir: None },
            }
        })
        .collect();

    let summary = ReplicationSummary {
        vintage,
        frozen_vintage: expectations.frozen_vintage.clone(),
        vintage_matches,
        data_digest: digest,
        studies: outcomes,
    };
    let mut doc = serde_json::to_value(&summary).expect("summary serializes");
    doc["vintage_note"] = json!(expectations.vintage_note);
    doc["passed"] = json!(summary.passed());
    let mut text = serde_json::to_string_pretty(&doc).expect("summary serializes");
    text.push('\n');
    write_files_atomically(
        out_dir,
        &[(PathBuf::from("summary.json"), text), (PathBuf::from("summary.csv"), summary.to_csv())],
    )?;
    Ok(summary)
}
