use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use synthcontrol::replicate::{replicate, Status};
use synthcontrol::sensitivity::{in_time_placebo, leave_one_out, BacktestConfig};
use synthcontrol::study::{load_panel_with_digest, write_files_atomically, RunOptions, StudyFile};
use synthcontrol::{run_inference, Error, ErrorCategory};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_SOLVER: u8 = 5;
const EXIT_TARGETS_MISSED: u8 = 6;

#[derive(Parser)]
#[command(name = "synthcontrol", version, about = "Synthetic control studies on macro panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one study: weights, gaps, placebo inference and configured
    /// robustness checks.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "SYNTHCONTROL_DATA")]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the placebo pre-MSPE cutoff multiple.
        #[arg(long)]
        mspe_cutoff: Option<f64>,
        /// Skip the backdated placebo and leave-one-out runs.
        #[arg(long)]
        no_sensitivity: bool,
        /// Print a JSON summary instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run the four bundled Sweden-1887 studies and compare with their
    /// published targets.
    Replicate {
        #[arg(long, env = "SYNTHCONTROL_DATA")]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label of the data release. Misses on anything but the frozen
        /// label are reported as warnings.
        #[arg(long)]
        vintage: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Re-run a study with the treatment date moved to `--year`.
    PlaceboInTime {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        year: i32,
        /// Last evaluation year; defaults to the true treatment year.
        #[arg(long)]
        post_end: Option<i32>,
        #[arg(long, env = "SYNTHCONTROL_DATA")]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Re-fit without each positively weighted donor in turn.
    LeaveOneOut {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "SYNTHCONTROL_DATA")]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.category() {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Data => EXIT_DATA,
        ErrorCategory::Solver => EXIT_SOLVER,
        ErrorCategory::Io => EXIT_IO,
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json serializes"));
}

fn emit(out: Option<&Path>, files: Vec<(PathBuf, String)>) -> synthcontrol::Result<()> {
    if let Some(dir) = out {
        write_files_atomically(dir, &files)?;
    }
    Ok(())
}

fn run(cli: Cli) -> synthcontrol::Result<u8> {
    match cli.command {
        Command::Run { config, data, out, mspe_cutoff, no_sensitivity, json } => {
            let options = RunOptions { mspe_cutoff, skip_sensitivity: no_sensitivity };
            let bundle = synthcontrol::run_study(&config, &data, &out, &options)?;
            if json {
                print_json(&bundle.summary_json());
            } else {
                let r = &bundle.inference;
                println!("study {} ({} vs {} donors)", bundle.study.name, r.treated, r.donors.len());
                println!("fit years {}, evaluation years {}", r.fit_years, r.eval_years);
                for d in &r.dropped {
                    println!("dropped {}: {}", d.unit, d.reason);
                }
                for (donor, w) in r.weights.donors.iter().zip(&r.weights.weights) {
                    if *w > 0.0 {
                        println!("  {donor:<4} {w:.3}");
                    }
                }
                println!("pre-RMSPE {:.4}, post-RMSPE {:.4}", r.treated_gap.pre_rmspe, r.treated_gap.post_rmspe);
                println!("p-value {} = {:.4}", r.p_value, r.p_value.value());
                if let Some((bt, b)) = &bundle.backtest {
                    println!("backdated to {}: p-value {}", bt.placebo_year, b.p_value);
                }
                if let Some(loo) = &bundle.leave_one_out {
                    println!("leave-one-out runs: {}", loo.results.len());
                }
                println!("outputs written to {}", out.display());
            }
            Ok(0)
        }
        Command::Replicate { data, out, vintage, json } => {
            let summary = replicate(&data, &out, vintage.as_deref())?;
            if json {
                print_json(&serde_json::to_value(&summary).expect("summary serializes"));
            } else {
                if !summary.vintage_matches {
                    println!(
                        "vintage {} differs from {}: misses are reported as warnings",
                        summary.vintage, summary.frozen_vintage
                    );
                }
                for s in &summary.studies {
                    if let Some(err) = &s.error {
                        println!("{}: could not run: {err}", s.study);
                    }
                    for c in &s.checks {
                        let tag = match c.status {
                            Status::Pass => "PASS",
                            Status::Fail => "FAIL",
                            Status::Warn => "WARN",
                        };
                        println!("{tag} {} {}: {} (expected {})", c.study, c.name, c.observed, c.expected);
                    }
                }
                println!("summary written to {}", out.join("summary.json").display());
            }
            Ok(if summary.passed() { 0 } else { EXIT_TARGETS_MISSED })
        }
        Command::PlaceboInTime { config, year, post_end, data, out, json } => {
            let study = StudyFile::load(&config)?;
            let (panel, _) = load_panel_with_digest(&data, &study.schema)?;
            let bt = BacktestConfig { base: study.config.clone(), placebo_year: year, post_window_end: post_end };
            let report = in_time_placebo(&panel, &bt)?;
            emit(
                out.as_deref(),
                vec![
                    ("weights.csv".into(), report.weights.to_csv()),
                    ("gaps.csv".into(), report.treated_gap.to_csv()),
                    ("ratios.csv".into(), report.ratios_csv()),
                    ("placebo_gaps.csv".into(), report.placebo_gaps_csv()),
                ],
            )?;
            let summary = json!({
                "study": study.name,
                "placebo_year": year,
                "backdated": report.metadata.backdated,
                "fit_years": report.fit_years,
                "eval_years": report.eval_years,
                "treated_ratio": report.treated_ratio(),
                "p_value": report.p_value,
            });
            if json {
                print_json(&summary);
            } else {
                println!(
                    "{} backdated to {year}: fit {}, evaluation {}, treated ratio {:.4}, p-value {}",
                    study.name,
                    report.fit_years,
                    report.eval_years,
                    report.treated_ratio().unwrap_or(f64::NAN),
                    report.p_value
                );
            }
            Ok(0)
        }
        Command::LeaveOneOut { config, data, out, json } => {
            let study = StudyFile::load(&config)?;
            let (panel, _) = load_panel_with_digest(&data, &study.schema)?;
            let main = run_inference(&panel, &study.config)?;
            let loo = leave_one_out(&panel, &study.config, &main.weights)?;
            emit(out.as_deref(), vec![("loo_gaps.csv".into(), loo.gaps_csv())])?;
            if json {
                print_json(&serde_json::to_value(&loo).expect("results serialize"));
            } else {
                for r in &loo.results {
                    println!(
                        "without {:<4} pre-RMSPE {:.4} post-RMSPE {:.4}",
                        r.excluded, r.gaps.pre_rmspe, r.gaps.post_rmspe
                    );
                }
                for s in &loo.skipped {
                    println!("without {:<4} skipped: {}", s.unit, s.reason);
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
