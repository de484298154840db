//! Experiment runner behind the `mlnsim` binary.
//!
//! [`config`] turns a JSON file plus flags into a validated [`Experiment`];
//! [`run_command`] executes it and writes CSV/JSON artifacts into the output
//! directory. Anything a failed command wrote is removed again.

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;

use std::path::PathBuf;

use mlnsim_core::link::{gain_at_ber, simulate_ber};
use mlnsim_core::measure::{compare_queries, empirical_rank_check, RankCheckReport};
use mlnsim_core::pep::{assess_exponent, decay_exponent, eigen_curve_with_tail, pep_curve, ratio_points, ExponentReport};
use mlnsim_core::{BerCurve, MeasureReport, PepEstimate, PepMethod, QueryKind, RandomStream, SnrSweepConfig, SystemDims};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Command, Experiment, ExperimentConfig, Preset};
use output::Artifacts;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_LEMMA_FAILURE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Substreams of the run seed, one per stochastic command.
const LEMMA_STREAM: u64 = 1;
const PEP_STREAM: u64 = 2;

pub const GAIN_LEVELS: [f64; 2] = [1e-2, 1e-3];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration: `{field}` {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: mlnsim_core::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } => EXIT_VALIDATION,
            CliError::Io { .. } | CliError::Core { .. } => EXIT_RUNTIME,
        }
    }
}

fn ctx(context: impl Into<String>) -> impl FnOnce(mlnsim_core::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Core { context, source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub preset: Option<Preset>,
    pub dims: SystemDims,
    pub codebook: String,
}

impl RunHeader {
    fn of(exp: &Experiment) -> Self {
        Self {
            preset: exp.preset,
            dims: exp.dims,
            codebook: exp.codebook_name.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    #[serde(flatten)]
    pub header: RunHeader,
    #[serde(flatten)]
    pub report: MeasureReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    #[serde(flatten)]
    pub header: RunHeader,
    pub seed: u64,
    pub passed: bool,
    pub report: RankCheckReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentStatus {
    Ok,
    Divergent,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEntry {
    pub query: QueryKind,
    pub predicted: usize,
    pub measured: Option<f64>,
    pub tail_index: Option<f64>,
    pub status: ExponentStatus,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PepSummary {
    #[serde(flatten)]
    pub header: RunHeader,
    pub method: PepMethod,
    pub trials: u64,
    pub seed: u64,
    pub exponent_window_db: [f64; 2],
    pub exponents: Vec<ExponentEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub ber_level: f64,
    /// SNR saved by the unitary query; `None` when a curve misses the level.
    pub gain_db: Option<f64>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerSummary {
    #[serde(flatten)]
    pub header: RunHeader,
    pub seed: u64,
    pub max_trials_per_point: u64,
    pub target_error_events: u64,
    pub curves: Vec<(QueryKind, String)>,
    pub gain_at_ber: Vec<GainEntry>,
}

/// What a finished command produced.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// `false` only when `verify-lemmas` saw a rank disagreement.
    pub passed: bool,
    pub measure: Option<MeasureSummary>,
    pub lemmas: Option<LemmaSummary>,
    pub pep: Option<PepSummary>,
    pub ber: Option<BerSummary>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_LEMMA_FAILURE
        }
    }
}

fn file_name(exp: &Experiment, stem: &str, suffix: &str) -> PathBuf {
    exp.output_dir.join(format!("{stem}_{}{suffix}", exp.label()))
}

fn kind_file(exp: &Experiment, stem: &str, kind: QueryKind) -> PathBuf {
    exp.output_dir.join(format!("{stem}_{}_{}.csv", exp.label(), kind))
}

pub fn run_measure(exp: &Experiment, out: &mut Artifacts) -> Result<MeasureSummary, CliError> {
    let summary = MeasureSummary {
        header: RunHeader::of(exp),
        report: compare_queries(&exp.pair, exp.dims.n),
    };
    output::write_json(&out.track(file_name(exp, "measure", ".json")), &summary)?;
    Ok(summary)
}

pub fn run_verify_lemmas(exp: &Experiment, out: &mut Artifacts) -> Result<LemmaSummary, CliError> {
    let stream = RandomStream::new(exp.seed).substream(LEMMA_STREAM);
    let report = empirical_rank_check(&exp.pair, exp.dims.n, exp.lemma_trials, stream).map_err(ctx("verify-lemmas"))?;
    let summary = LemmaSummary {
        header: RunHeader::of(exp),
        seed: exp.seed,
        passed: report.passed(),
        report,
    };
    output::write_json(&out.track(file_name(exp, "lemmas", ".json")), &summary)?;
    Ok(summary)
}

fn exponent_entry(kind: QueryKind, exp: &Experiment, result: mlnsim_core::Result<ExponentReport>) -> ExponentEntry {
    let predicted = if kind.is_unitary() {
        mlnsim_core::measure::r_unitary(&exp.pair, exp.dims.n)
    } else {
        mlnsim_core::measure::r_uniform(&exp.pair, exp.dims.n)
    };
    match result {
        Ok(r) => ExponentEntry {
            query: kind,
            predicted,
            measured: Some(r.measured),
            tail_index: r.tail_index.is_finite().then_some(r.tail_index),
            status: ExponentStatus::Ok,
            message: None,
        },
        Err(e @ mlnsim_core::Error::DivergentAverage {
            tail_index,
            measured_exponent,
            ..
        }) => ExponentEntry {
            query: kind,
            predicted,
            measured: Some(measured_exponent),
            tail_index: Some(tail_index),
            status: ExponentStatus::Divergent,
            message: Some(e.to_string()),
        },
        Err(e) => ExponentEntry {
            query: kind,
            predicted,
            measured: None,
            tail_index: None,
            status: ExponentStatus::Failed,
            message: Some(e.to_string()),
        },
    }
}

fn in_window(estimates: &[PepEstimate], window: [f64; 2]) -> Vec<PepEstimate> {
    estimates
        .iter()
        .filter(|e| e.snr_db >= window[0] && e.snr_db <= window[1])
        .cloned()
        .collect()
}

pub fn run_pep(exp: &Experiment, out: &mut Artifacts) -> Result<PepSummary, CliError> {
    // All kinds share one stream, so the curves see the same fading draws.
    let stream = RandomStream::new(exp.seed).substream(PEP_STREAM);
    let grid = &exp.pep_snr_grid_db;
    let mut curves = Vec::new();
    let mut exponents = Vec::new();
    for &kind in &exp.queries {
        let context = format!("pep ({kind})");
        let (curve, entry) = match exp.pep_method {
            PepMethod::EigenProductMc => {
                let (curve, tail) = eigen_curve_with_tail(kind, &exp.pair, &exp.dims, grid, exp.pep_trials, stream)
                    .map_err(ctx(context))?;
                let fit = assess_exponent(kind, &exp.pair, exp.dims.n, in_window(&curve, exp.exponent_window_db), tail);
                (curve, exponent_entry(kind, exp, fit))
            }
            PepMethod::QFunctionMc => {
                let curve = pep_curve(exp.pep_method, kind, &exp.pair, &exp.dims, grid, exp.pep_trials, stream)
                    .map_err(ctx(context))?;
                let fit = decay_exponent(&in_window(&curve, exp.exponent_window_db)).map(|measured| ExponentReport {
                    kind,
                    predicted: 0,
                    measured,
                    tail_index: f64::INFINITY,
                    estimates: Vec::new(),
                });
                (curve, exponent_entry(kind, exp, fit))
            }
        };
        output::write_pep_csv(&out.track(kind_file(exp, "pep", kind)), &curve)?;
        curves.push((kind, curve));
        exponents.push(entry);
    }

    let unitary = curves.iter().find(|(k, _)| k.is_unitary());
    let uniform = curves.iter().find(|(k, _)| !k.is_unitary());
    if let (Some((_, a)), Some((_, b))) = (unitary, uniform) {
        let pts = ratio_points(a.clone(), b.clone()).map_err(ctx("pep ratio"))?;
        output::write_ratio_csv(&out.track(file_name(exp, "pep_ratio", ".csv")), &pts)?;
    }

    let summary = PepSummary {
        header: RunHeader::of(exp),
        method: exp.pep_method,
        trials: exp.pep_trials,
        seed: exp.seed,
        exponent_window_db: exp.exponent_window_db,
        exponents,
    };
    output::write_json(&out.track(file_name(exp, "pep_summary", ".json")), &summary)?;
    Ok(summary)
}

/// Gain of the unitary curve over the uniform one at each level.
pub fn gains(unitary: &BerCurve, uniform: &BerCurve) -> Vec<GainEntry> {
    GAIN_LEVELS
        .iter()
        .map(|&level| match gain_at_ber(unitary, uniform, level) {
            Ok(g) => GainEntry {
                ber_level: level,
                gain_db: Some(g),
                message: None,
            },
            Err(e) => GainEntry {
                ber_level: level,
                gain_db: None,
                message: Some(e.to_string().replace("curve_a", "unitary").replace("curve_b", "uniform")),
            },
        })
        .collect()
}

pub fn run_ber(exp: &Experiment, out: &mut Artifacts) -> Result<BerSummary, CliError> {
    let mut curves = Vec::new();
    let mut files = Vec::new();
    for &kind in &exp.queries {
        let cfg = SnrSweepConfig {
            dims: exp.dims,
            query_kind: kind,
            codebook: exp.codebook.clone(),
            snr_grid_db: exp.ber_snr_grid_db.clone(),
            max_trials_per_point: exp.ber_trials,
            target_error_events: exp.target_error_events,
            seed: exp.seed,
        };
        let curve = simulate_ber(&cfg).map_err(ctx(format!("ber ({kind})")))?;
        let path = out.track(kind_file(exp, "ber", kind));
        output::write_ber_csv(&path, &curve)?;
        files.push((kind, path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()));
        curves.push((kind, curve));
    }
    let unitary = curves.iter().find(|(k, _)| k.is_unitary());
    let uniform = curves.iter().find(|(k, _)| !k.is_unitary());
    let gain_at_ber = match (unitary, uniform) {
        (Some((_, a)), Some((_, b))) => gains(a, b),
        _ => Vec::new(),
    };
    let summary = BerSummary {
        header: RunHeader::of(exp),
        seed: exp.seed,
        max_trials_per_point: exp.ber_trials,
        target_error_events: exp.target_error_events,
        curves: files,
        gain_at_ber,
    };
    output::write_json(&out.track(file_name(exp, "ber_summary", ".json")), &summary)?;
    Ok(summary)
}

/// Runs `exp.command`. On error every file this call wrote is deleted.
pub fn run_command(exp: &Experiment) -> Result<Outcome, CliError> {
    let mut out = Artifacts::default();
    let mut outcome = Outcome {
        files: Vec::new(),
        passed: true,
        measure: None,
        lemmas: None,
        pep: None,
        ber: None,
    };
    let all = exp.command == Command::Reproduce;
    if all || exp.command == Command::Measure {
        outcome.measure = Some(run_measure(exp, &mut out)?);
    }
    if all || exp.command == Command::VerifyLemmas {
        let l = run_verify_lemmas(exp, &mut out)?;
        outcome.passed = l.passed;
        outcome.lemmas = Some(l);
    }
    if all || exp.command == Command::Pep {
        outcome.pep = Some(run_pep(exp, &mut out)?);
    }
    if all || exp.command == Command::Ber {
        outcome.ber = Some(run_ber(exp, &mut out)?);
    }
    outcome.files = out.commit();
    Ok(outcome)
}
