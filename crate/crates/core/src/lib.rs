//! Synthetic control estimation for comparative case studies.
//!
//! The pipeline runs from a long-format macro panel to donor weights fit on
//! pre-treatment outcomes, treated-minus-synthetic gaps, placebo permutation
//! inference on RMSPE ratios, and the in-time placebo and leave-one-out
//! robustness checks. [`study`] wires the pieces into reproducible output
//! directories and [`replicate`] runs the bundled Sweden-1887 studies
//! against their published targets.

pub mod config;
pub mod countries;
pub mod error;
pub mod fmt;
pub mod gaps;
pub mod inference;
pub mod matrices;
pub mod panel;
pub mod rates;
pub mod replicate;
pub mod sensitivity;
pub mod solver;
pub mod study;

pub use config::{MissingPolicy, PlaceboPool, StudyConfig, YearRange};
pub use gaps::{estimate, synthesize, Estimate, GapSeries};
pub use inference::{mspe_filter, permutation_pvalue, rmspe_ratios, run_inference, run_placebos, InferenceReport, PValue};
pub use error::{Error, ErrorCategory, Result};
pub use matrices::{build_matrices, StudyMatrices};
pub use panel::{growth_table, load_panel, read_panel, resolve_outcome, OutcomeSpec, PanelDataset, PanelSchema};
pub use rates::{aagr, pct_change};
pub use sensitivity::{in_time_placebo, leave_one_out, BacktestConfig, LeaveOneOut, LeaveOneOutResult};
pub use solver::{fit_weights, WeightVector};
pub use replicate::{replicate, ReplicationSummary, Status};
pub use study::{run_study, RunOptions, StudyBundle, StudyFile};
