//! Study files, end-to-end runs and result emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::StudyConfig;
use crate::error::{Error, Result};
use crate::fmt::{dec6, sig6, sig6_opt};
use crate::inference::{run_inference, InferenceReport};
use crate::panel::{read_panel, resolve_outcome, PanelDataset, PanelSchema};
use crate::sensitivity::{in_time_placebo, leave_one_out, BacktestConfig, LeaveOneOut, POSITIVE_WEIGHT_THRESHOLD};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    /// Run the backdated placebo at this year.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backdate_year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backdate_post_end: Option<i32>,
    #[serde(default)]
    pub leave_one_out: bool,
}

/// One study as stored on disk: a named [`StudyConfig`] plus the CSV column
/// mapping and optional robustness checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFile {
    pub name: String,
    #[serde(flatten)]
    pub config: StudyConfig,
    #[serde(default)]
    pub schema: PanelSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivitySpec>,
}

impl StudyFile {
    /// Parses a study file. A `report.json` from an earlier run is accepted
    /// too; its `config` echo is used.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("study file: {e}")))?;
        let value = match value.get("config") {
            Some(echo) if value.get("study").is_some() => echo.clone(),
            _ => value,
        };
        let study: StudyFile =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("study file: {e}")))?;
        study.config.validate()?;
        Ok(study)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Command-line style overrides applied on top of a study file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mspe_cutoff: Option<f64>,
    pub skip_sensitivity: bool,
}

impl RunOptions {
    pub fn apply(&self, study: &StudyFile) -> Result<StudyFile> {
        let mut study = study.clone();
        if let Some(cutoff) = self.mspe_cutoff {
            study.config.mspe_cutoff = cutoff;
        }
        if self.skip_sensitivity {
            study.sensitivity = None;
        }
        study.config.validate()?;
        Ok(study)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub data_digest: String,
    pub tool_version: String,
    pub generated_at: String,
}

#[derive(Debug, Clone)]
pub struct StudyBundle {
    pub study: StudyFile,
    pub inference: InferenceReport,
    pub backtest: Option<(BacktestConfig, InferenceReport)>,
    pub leave_one_out: Option<LeaveOneOut>,
    /// Outcome for the treated unit and every configured donor over the
    /// configured years.
    pub spaghetti: Vec<(String, i32, Option<f64>)>,
    pub provenance: Provenance,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// Reads and digests a panel file in one pass over its bytes.
pub fn load_panel_with_digest(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<(PanelDataset, String)> {
    let path = path.as_ref();
    let bytes = fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let data = read_panel(bytes.as_slice(), schema)?;
    Ok((data, sha256_hex(&bytes)))
}

fn spaghetti(data: &PanelDataset, config: &StudyConfig) -> Result<Vec<(String, i32, Option<f64>)>> {
    let mut rows = Vec::new();
    for unit in std::iter::once(&config.treated).chain(&config.donors) {
        for year in config.fit_years.start..=config.eval_years.end {
            let value = if data.years().binary_search(&year).is_ok() {
                resolve_outcome(data, &config.outcome, unit, year)?
            } else {
                None
            };
            rows.push((unit.clone(), year, value));
        }
    }
    Ok(rows)
}

/// Runs the full pipeline for one study on an already loaded panel.
pub fn run_bundle(study: &StudyFile, data: &PanelDataset, data_digest: &str) -> Result<StudyBundle> {
    let config = &study.config;
    let inference = run_inference(data, config)?;
    let mut backtest = None;
    let mut loo = None;
    if let Some(spec) = &study.sensitivity {
        if let Some(year) = spec.backdate_year {
            let bt = BacktestConfig {
                base: config.clone(),
                placebo_year: year,
                post_window_end: spec.backdate_post_end,
            };
            let report = in_time_placebo(data, &bt)?;
            backtest = Some((bt, report));
        }
        if spec.leave_one_out {
            loo = Some(leave_one_out(data, config, &inference.weights)?);
        }
    }
    Ok(StudyBundle {
        spaghetti: spaghetti(data, config)?,
        study: study.clone(),
        inference,
        backtest,
        leave_one_out: loo,
        provenance: Provenance {
            data_digest: data_digest.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        },
    })
}

fn weights_json(report: &InferenceReport) -> Value {
    let mut rows: Vec<(&String, f64)> = report
        .weights
        .donors
        .iter()
        .zip(report.weights.weights.iter().copied())
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    Value::Array(rows.into_iter().map(|(d, w)| json!({ "donor": d, "weight": w })).collect())
}

fn inference_json(report: &InferenceReport) -> Value {
    let g = &report.treated_gap;
    json!({
        "treated": report.treated,
        "effective_fit_years": report.fit_years,
        "eval_years": report.eval_years,
        "donors": report.donors,
        "dropped_donors": report.dropped,
        "weights": weights_json(report),
        "objective": report.weights.objective,
        "pre_mspe": g.pre_mspe,
        "pre_rmspe": g.pre_rmspe,
        "post_mspe": g.post_mspe,
        "post_rmspe": g.post_rmspe,
        "p_value": report.p_value,
        "filtered_p_value": report.filtered_p_value,
        "alternative_pool_p_value": report.alternative_pool_p_value,
        "treated_ratio": report.treated_ratio(),
        "treated_ratio_is_max": report.treated_ratio_is_max(),
        "ratios": report.ratios,
        "filter": report.filter,
        "placebo_runs": report.placebos.len(),
        "skipped_placebos": report.skipped,
        "metadata": {
            "placebo_pool": report.metadata.placebo_pool,
            "mspe_cutoff": report.metadata.mspe_cutoff,
            "backdated": report.metadata.backdated,
            "solver": {
                "method": report.weights.method,
                "ridge_epsilon_relative": report.metadata.ridge_epsilon,
                "ridge_absolute": report.weights.ridge,
                "iterations": report.weights.iterations,
            },
        },
    })
}

impl StudyBundle {
    pub fn weights(&self) -> &crate::solver::WeightVector {
        &self.inference.weights
    }

    pub fn gaps(&self) -> &crate::gaps::GapSeries {
        &self.inference.treated_gap
    }

    /// The deterministic `report.json` document; no timestamps.
    pub fn report_json(&self) -> Value {
        let mut doc = inference_json(&self.inference);
        let obj = doc.as_object_mut().expect("object literal");
        obj.insert("study".into(), json!(self.study.name));
        obj.insert("config".into(), serde_json::to_value(&self.study).expect("study serializes"));
        obj.insert("data_digest".into(), json!(self.provenance.data_digest));
        obj.insert("tool_version".into(), json!(self.provenance.tool_version));
        if let Some((bt, report)) = &self.backtest {
            obj.insert(
                "backtest".into(),
                json!({
                    "placebo_year": bt.placebo_year,
                    "fit_years": report.fit_years,
                    "eval_years": report.eval_years,
                    "p_value": report.p_value,
                    "treated_ratio": report.treated_ratio(),
                }),
            );
        }
        if let Some(loo) = &self.leave_one_out {
            let runs: Vec<Value> = loo
                .results
                .iter()
                .map(|r| {
                    json!({
                        "excluded": r.excluded,
                        "objective": r.weights.objective,
                        "pre_rmspe": r.gaps.pre_rmspe,
                        "post_rmspe": r.gaps.post_rmspe,
                        "weights": r.weights.donors.iter().zip(&r.weights.weights)
                            .map(|(d, w)| json!({ "donor": d, "weight": w }))
                            .collect::<Vec<_>>(),
                    })
                })
                .collect();
            obj.insert(
                "leave_one_out".into(),
                json!({ "threshold": POSITIVE_WEIGHT_THRESHOLD, "runs": runs, "skipped": loo.skipped }),
            );
        }
        doc
    }

    /// Core result files plus plot data and optional sensitivity outputs,
    /// as `(relative path, contents)`.
    pub fn files(&self) -> Vec<(PathBuf, String)> {
        let report = &self.inference;
        let mut files = vec![
            ("weights.csv".into(), report.weights.to_csv()),
            ("gaps.csv".into(), report.treated_gap.to_csv()),
            ("ratios.csv".into(), report.ratios_csv()),
            ("placebo_gaps.csv".into(), report.placebo_gaps_csv()),
            ("report.json".into(), pretty(&self.report_json())),
            (
                "provenance.json".into(),
                pretty(&serde_json::to_value(&self.provenance).expect("provenance serializes")),
            ),
        ];
        files.extend(self.plot_files());
        if let Some(loo) = &self.leave_one_out {
            files.push(("loo_gaps.csv".into(), loo.gaps_csv()));
        }
        if let Some((bt, bt_report)) = &self.backtest {
            let mut doc = inference_json(bt_report);
            let obj = doc.as_object_mut().expect("object literal");
            obj.insert("study".into(), json!(self.study.name));
            obj.insert("placebo_year".into(), json!(bt.placebo_year));
            obj.insert("backdated".into(), json!(bt.is_backdated()));
            let dir = PathBuf::from("backtest");
            files.push((dir.join("weights.csv"), bt_report.weights.to_csv()));
            files.push((dir.join("gaps.csv"), bt_report.treated_gap.to_csv()));
            files.push((dir.join("ratios.csv"), bt_report.ratios_csv()));
            files.push((dir.join("placebo_gaps.csv"), bt_report.placebo_gaps_csv()));
            files.push((dir.join("report.json"), pretty(&doc)));
        }
        files
    }

    /// Series behind the four standard panels: all units' outcomes, treated
    /// vs synthetic path, placebo gap fan and ratio bars.
    pub fn plot_files(&self) -> Vec<(PathBuf, String)> {
        let report = &self.inference;
        let mut spaghetti = String::from("unit,year,value\n");
        for (unit, year, value) in &self.spaghetti {
            spaghetti.push_str(&format!("{unit},{year},{}\n", sig6_opt(*value)));
        }
        let g = &report.treated_gap;
        let mut paths = String::from("year,treated,synthetic\n");
        for i in 0..g.years.len() {
            paths.push_str(&format!("{},{},{}\n", g.years[i], sig6(g.treated[i]), sig6(g.synthetic[i])));
        }
        let mut fan = String::from("unit,year,gap,retained_flag\n");
        let series = std::iter::once((&report.treated, g)).chain(report.placebos.iter().map(|r| (&r.unit, &r.gaps)));
        for (unit, gaps) in series {
            let flag = u8::from(report.is_retained(unit));
            for (year, gap) in gaps.years.iter().zip(&gaps.gap) {
                fan.push_str(&format!("{unit},{year},{},{flag}\n", sig6(*gap)));
            }
        }
        let mut bars = String::from("unit,ratio\n");
        for r in &report.ratios {
            bars.push_str(&format!("{},{}\n", r.unit, sig6_opt(r.ratio)));
        }
        vec![
            ("spaghetti.csv".into(), spaghetti),
            ("paths.csv".into(), paths),
            ("gaps_fan.csv".into(), fan),
            ("ratio_bars.csv".into(), bars),
        ]
    }

    /// Compact machine-readable summary.
    pub fn summary_json(&self) -> Value {
        let r = &self.inference;
        json!({
            "study": self.study.name,
            "treated": r.treated,
            "effective_fit_years": r.fit_years,
            "weights": r.weights.donors.iter().zip(&r.weights.weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(d, w)| (d.clone(), json!(dec6(*w))))
                .collect::<serde_json::Map<_, _>>(),
            "pre_rmspe": r.treated_gap.pre_rmspe,
            "post_rmspe": r.treated_gap.post_rmspe,
            "treated_ratio": r.treated_ratio(),
            "p_value": r.p_value,
            "backtest_p_value": self.backtest.as_ref().map(|(_, b)| b.p_value),
            "leave_one_out_runs": self.leave_one_out.as_ref().map(|l| l.results.len()),
        })
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

/// Writes `files` under `out_dir`. Everything is first written to a staging
/// directory next to `out_dir` and only moved into place once all writes
/// have succeeded.
pub fn write_files_atomically(out_dir: &Path, files: &[(PathBuf, String)]) -> Result<Vec<PathBuf>> {
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new()
        .prefix(".synthcontrol-staging-")
        .tempdir_in(&parent)?;
    for (rel, contents) in files {
        let path = staging.path().join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, contents)?;
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(files.len());
    for (rel, _) in files {
        let target = out_dir.join(rel);
        if let Some(dir) = target.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::rename(staging.path().join(rel), &target)?;
        written.push(target);
    }
    Ok(written)
}

pub fn emit_bundle(bundle: &StudyBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    write_files_atomically(out_dir, &bundle.files())
}

pub fn emit_plot_data(bundle: &StudyBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    write_files_atomically(out_dir, &bundle.plot_files())
}

/// Loads config and data, runs the study and writes its outputs. Nothing
/// is written unless the whole pipeline succeeds.
pub fn run_study(
    config_path: impl AsRef<Path>,
    data_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    options: &RunOptions,
) -> Result<StudyBundle> {
    let study = options.apply(&StudyFile::load(config_path)?)?;
    let (data, digest) = load_panel_with_digest(data_path, &study.schema)?;
    let bundle = run_bundle(&study, &data, &digest)?;
    emit_bundle(&bundle, out_dir.as_ref())?;
    Ok(bundle)
}
