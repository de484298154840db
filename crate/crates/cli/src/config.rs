//! Experiment configuration: a flat JSON document, overridable by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mlnsim_core::codes::{
    example1_delta, pairwise_codebook_from_delta, repetition_bpsk, uncoded_bpsk, DifferenceMatrix,
};
use mlnsim_core::linalg::{ComplexMatrix, C64};
use mlnsim_core::measure::{r_uniform, r_unitary};
use mlnsim_core::pep::PepMethod;
use mlnsim_core::{Codebook, QueryKind, SystemDims};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_LEMMA_TRIALS: u64 = 1000;
pub const DEFAULT_PEP_TRIALS: u64 = 100_000;
pub const DEFAULT_BER_TRIALS: u64 = 1_000_000;
pub const DEFAULT_TARGET_ERROR_EVENTS: u64 = 200;
pub const DEFAULT_PEP_GRID: &str = "10:5:45";
pub const DEFAULT_BER_GRID: &str = "0:2:40";
pub const DEFAULT_EXPONENT_WINDOW: [f64; 2] = [25.0, 45.0];
pub const DEFAULT_OUTPUT_DIR: &str = "mlnsim-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Measure,
    VerifyLemmas,
    Pep,
    Ber,
    Reproduce,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Measure,
        Command::VerifyLemmas,
        Command::Pep,
        Command::Ber,
        Command::Reproduce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Measure => "measure",
            Command::VerifyLemmas => "verify-lemmas",
            Command::Pep => "pep",
            Command::Ber => "ber",
            Command::Reproduce => "reproduce",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Example1,
    Example2,
    Example3,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Example1, Preset::Example2, Preset::Example3];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Example1 => "example1",
            Preset::Example2 => "example2",
            Preset::Example3 => "example3",
        }
    }

    /// `(M, L, N, T)` and codebook.
    pub fn setup(self) -> (SystemDims, CodebookName) {
        let (m, l, n, t, book) = match self {
            Preset::Example1 => (2, 2, 2, 2, CodebookName::Example1Pair),
            Preset::Example2 => (2, 2, 1, 2, CodebookName::Example1Pair),
            Preset::Example3 => (2, 1, 2, 2, CodebookName::RepetitionBpsk),
        };
        (SystemDims { m, l, n, t }, book)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodebookName {
    /// Antipodal pair built on the two-antenna example difference matrix.
    Example1Pair,
    /// `±(1, ..., 1)` on one antenna.
    RepetitionBpsk,
    /// Every `±1/√L` block.
    UncodedBpsk,
    /// Antipodal pair built on the `delta` key.
    Custom,
}

impl CodebookName {
    pub fn as_str(self) -> &'static str {
        match self {
            CodebookName::Example1Pair => "example1-pair",
            CodebookName::RepetitionBpsk => "repetition-bpsk",
            CodebookName::UncodedBpsk => "uncoded-bpsk",
            CodebookName::Custom => "custom",
        }
    }
}

impl fmt::Display for CodebookName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A matrix entry in JSON: a real number or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl From<Entry> for C64 {
    fn from(e: Entry) -> C64 {
        match e {
            Entry::Real(re) => C64::new(re, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

/// Raw configuration. Every key is optional; [`ExperimentConfig::resolve`]
/// applies presets and defaults and validates the result.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub preset: Option<Preset>,
    pub m: Option<usize>,
    pub l: Option<usize>,
    pub n: Option<usize>,
    pub t: Option<usize>,
    pub codebook: Option<CodebookName>,
    /// `L x T` difference pattern for the `custom` codebook.
    pub delta: Option<Vec<Vec<Entry>>>,
    /// Restrict `pep` / `ber` to one query scheme. Both uniform and DFT run
    /// otherwise.
    pub query: Option<QueryKind>,
    pub pep_method: Option<PepMethod>,
    pub seed: Option<u64>,
    pub lemma_trials: Option<u64>,
    pub pep_trials: Option<u64>,
    /// Maximum trials per SNR point.
    pub ber_trials: Option<u64>,
    pub target_error_events: Option<u64>,
    pub pep_snr_grid_db: Option<Vec<f64>>,
    pub ber_snr_grid_db: Option<Vec<f64>>,
    /// `[lo, hi]` dB range used for decay-exponent fits.
    pub exponent_window_db: Option<[f64; 2]>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    /// Keys set in `over` replace those in `self`.
    pub fn overridden_by(self, over: ExperimentConfig) -> ExperimentConfig {
        macro_rules! pick {
            ($($f:ident),*) => {
                ExperimentConfig { $($f: over.$f.or(self.$f)),* }
            };
        }
        pick!(
            command,
            preset,
            m,
            l,
            n,
            t,
            codebook,
            delta,
            query,
            pep_method,
            seed,
            lemma_trials,
            pep_trials,
            ber_trials,
            target_error_events,
            pep_snr_grid_db,
            ber_snr_grid_db,
            exponent_window_db,
            output_dir
        )
    }

    pub fn resolve(&self) -> Result<Experiment, CliError> {
        let command = self.command.ok_or_else(|| invalid("command", "is required"))?;

        let (dims, codebook_name) = match self.preset {
            Some(preset) => {
                for (name, set) in [
                    ("m", self.m.is_some()),
                    ("l", self.l.is_some()),
                    ("n", self.n.is_some()),
                    ("t", self.t.is_some()),
                    ("codebook", self.codebook.is_some()),
                    ("delta", self.delta.is_some()),
                ] {
                    if set {
                        return Err(invalid(name, &format!("is fixed by preset {preset}")));
                    }
                }
                preset.setup()
            }
            None => {
                let need = |v: Option<usize>, name: &'static str| v.ok_or_else(|| invalid(name, "is required without a preset"));
                let dims = SystemDims {
                    m: need(self.m, "m")?,
                    l: need(self.l, "l")?,
                    n: need(self.n, "n")?,
                    t: need(self.t, "t")?,
                };
                let book = self.codebook.ok_or_else(|| invalid("codebook", "is required without a preset"))?;
                (dims, book)
            }
        };
        for (name, v) in [("m", dims.m), ("l", dims.l), ("n", dims.n), ("t", dims.t)] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.delta.is_some() && codebook_name != CodebookName::Custom {
            return Err(invalid("delta", "only applies to the custom codebook"));
        }
        let codebook = build_codebook(codebook_name, &dims, self.delta.as_deref())?;
        let pair = worst_pair(&codebook, dims.n)?;

        let queries = match self.query {
            Some(q) => vec![q],
            None => vec![QueryKind::Uniform, QueryKind::UnitaryDft],
        };
        if queries.iter().any(|q| q.is_unitary()) && dims.t != dims.m {
            return Err(invalid(
                "query",
                &format!("unitary query needs T == M, got T={} M={}", dims.t, dims.m),
            ));
        }

        let positive = |v: Option<u64>, default: u64, name: &'static str| match v {
            Some(0) => Err(invalid(name, "must be at least 1")),
            Some(v) => Ok(v),
            None => Ok(default),
        };
        let grid = |v: &Option<Vec<f64>>, default: &str, name: &'static str| -> Result<Vec<f64>, CliError> {
            let g = match v {
                Some(g) => g.clone(),
                None => parse_snr_grid(default).expect("default grid parses"),
            };
            check_grid(&g).map_err(|r| invalid(name, &r))?;
            Ok(g)
        };
        let window = self.exponent_window_db.unwrap_or(DEFAULT_EXPONENT_WINDOW);
        if !(window[0] < window[1]) {
            return Err(invalid("exponent_window_db", "needs lo < hi"));
        }

        let output_dir = self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        check_writable(&output_dir)?;

        Ok(Experiment {
            command,
            preset: self.preset,
            dims,
            codebook_name,
            codebook,
            pair,
            queries,
            pep_method: self.pep_method.unwrap_or(PepMethod::EigenProductMc),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            lemma_trials: positive(self.lemma_trials, DEFAULT_LEMMA_TRIALS, "lemma_trials")?,
            pep_trials: positive(self.pep_trials, DEFAULT_PEP_TRIALS, "pep_trials")?,
            ber_trials: positive(self.ber_trials, DEFAULT_BER_TRIALS, "ber_trials")?,
            target_error_events: positive(self.target_error_events, DEFAULT_TARGET_ERROR_EVENTS, "target_error_events")?,
            pep_snr_grid_db: grid(&self.pep_snr_grid_db, DEFAULT_PEP_GRID, "pep_snr_grid_db")?,
            ber_snr_grid_db: grid(&self.ber_snr_grid_db, DEFAULT_BER_GRID, "ber_snr_grid_db")?,
            exponent_window_db: window,
            output_dir,
        })
    }
}

/// A validated, fully populated experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub command: Command,
    pub preset: Option<Preset>,
    pub dims: SystemDims,
    pub codebook_name: CodebookName,
    pub codebook: Codebook,
    /// Codeword difference with the smallest rank measures.
    pub pair: DifferenceMatrix,
    pub queries: Vec<QueryKind>,
    pub pep_method: PepMethod,
    pub seed: u64,
    pub lemma_trials: u64,
    pub pep_trials: u64,
    pub ber_trials: u64,
    pub target_error_events: u64,
    pub pep_snr_grid_db: Vec<f64>,
    pub ber_snr_grid_db: Vec<f64>,
    pub exponent_window_db: [f64; 2],
    pub output_dir: PathBuf,
}

impl Experiment {
    /// Prefix for output file names.
    pub fn label(&self) -> &'static str {
        self.preset.map_or("custom", Preset::as_str)
    }
}

fn invalid(field: &'static str, reason: &str) -> CliError {
    CliError::Validation {
        field,
        reason: reason.to_string(),
    }
}

fn core_invalid(field: &'static str, e: mlnsim_core::Error) -> CliError {
    invalid(field, &e.to_string())
}

fn build_codebook(name: CodebookName, dims: &SystemDims, delta: Option<&[Vec<Entry>]>) -> Result<Codebook, CliError> {
    let need_shape = |l: usize, t: usize| {
        if (dims.l, dims.t) != (l, t) {
            Err(invalid(
                "codebook",
                &format!("{name} needs L={l}, T={t}; got L={}, T={}", dims.l, dims.t),
            ))
        } else {
            Ok(())
        }
    };
    let pair_from = |d: ComplexMatrix| -> Result<Codebook, CliError> {
        let d = DifferenceMatrix::from_delta(d).map_err(|e| core_invalid("delta", e))?;
        Ok(pairwise_codebook_from_delta(&d).map_err(|e| core_invalid("delta", e))?.codebook)
    };
    match name {
        CodebookName::Example1Pair => {
            need_shape(2, 2)?;
            pair_from(example1_delta())
        }
        CodebookName::RepetitionBpsk => {
            need_shape(1, dims.t)?;
            repetition_bpsk(dims.t).map_err(|e| core_invalid("codebook", e))
        }
        CodebookName::UncodedBpsk => uncoded_bpsk(dims.t, dims.l).map_err(|e| core_invalid("codebook", e)),
        CodebookName::Custom => {
            let rows = delta.ok_or_else(|| invalid("delta", "is required for the custom codebook"))?;
            let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|&e| e.into()).collect()).collect();
            let m = ComplexMatrix::from_rows(&rows).map_err(|e| core_invalid("delta", e))?;
            if m.shape() != (dims.l, dims.t) {
                return Err(invalid(
                    "delta",
                    &format!("must be L x T = {}x{}, got {}x{}", dims.l, dims.t, m.rows(), m.cols()),
                ));
            }
            pair_from(m)
        }
    }
}

/// The codeword pair whose difference has the smallest `(R_unitary,
/// R_uniform)`, then the smallest energy; first pair wins ties.
pub fn worst_pair(codebook: &Codebook, n: usize) -> Result<DifferenceMatrix, CliError> {
    let words = codebook.codewords();
    let mut best: Option<((usize, usize, f64), DifferenceMatrix)> = None;
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            let d = mlnsim_core::codes::difference_matrix(&words[i], &words[j]).map_err(|e| core_invalid("codebook", e))?;
            if d.is_zero() {
                return Err(invalid("codebook", "contains two identical codewords"));
            }
            let key = (r_unitary(&d, n), r_uniform(&d, n), d.delta().frobenius_norm_sq());
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, d));
            }
        }
    }
    best.map(|(_, d)| d).ok_or_else(|| invalid("codebook", "needs at least two codewords"))
}

/// Parses `A:STEP:B` into `A, A + STEP, ..., B` (inclusive when `B` lies on
/// the lattice).
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, step, b] = parts.as_slice() else {
        return Err(format!("expected A:STEP:B, got `{s}`"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("bad number `{x}`: {e}"));
    let (a, step, b) = (num(a)?, num(step)?, num(b)?);
    if !(a.is_finite() && b.is_finite() && step.is_finite()) || !(step > 0.0) || b < a {
        return Err(format!("`{s}` needs finite A <= B and STEP > 0"));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    if count > 10_000 {
        return Err(format!("`{s}` has too many points"));
    }
    Ok((0..=count).map(|i| a + step * i as f64).collect())
}

fn check_grid(g: &[f64]) -> Result<(), String> {
    if g.is_empty() {
        return Err("must not be empty".into());
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err("must be finite".into());
    }
    if g.windows(2).any(|w| w[1] <= w[0]) {
        return Err("must be strictly ascending".into());
    }
    Ok(())
}

fn check_writable(dir: &Path) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Io {
        path: dir.to_path_buf(),
        message: format!("output directory is not writable: {e}"),
    };
    std::fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(format!(".mlnsim-probe-{}", std::process::id()));
    std::fs::write(&probe, b"").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            command: Some(Command::Measure),
            output_dir: Some(dir.to_path_buf()),
            ..Default::default()
        }
    }

    #[test]
    fn presets_fix_dims_and_codebook() {
        let dir = tempfile::tempdir().unwrap();
        for (preset, dims, book) in [
            (Preset::Example1, (2, 2, 2, 2), CodebookName::Example1Pair),
            (Preset::Example2, (2, 2, 1, 2), CodebookName::Example1Pair),
            (Preset::Example3, (2, 1, 2, 2), CodebookName::RepetitionBpsk),
        ] {
            let cfg = ExperimentConfig {
                preset: Some(preset),
                ..base(dir.path())
            };
            let e = cfg.resolve().unwrap();
            assert_eq!((e.dims.m, e.dims.l, e.dims.n, e.dims.t), dims);
            assert_eq!(e.codebook_name, book);
        }
    }

    #[test]
    fn missing_codebook_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            m: Some(2),
            l: Some(2),
            n: Some(2),
            t: Some(2),
            ..base(dir.path())
        };
        match cfg.resolve() {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "codebook"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn preset_conflicts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            preset: Some(Preset::Example1),
            n: Some(3),
            ..base(dir.path())
        };
        assert!(matches!(cfg.resolve(), Err(CliError::Validation { field: "n", .. })));
    }

    #[test]
    fn flags_override_file_values() {
        let file = ExperimentConfig::from_json_str(r#"{"command": "pep", "seed": 1, "preset": "example2"}"#, "inline").unwrap();
        let flags = ExperimentConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overridden_by(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.command, Some(Command::Pep));
        assert_eq!(merged.preset, Some(Preset::Example2));
    }

    #[test]
    fn parse_errors_carry_position() {
        match ExperimentConfig::from_json_str("{\n  \"seed\": \"x\"\n}", "cfg.json") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::from_json_str(r#"{"sed": 1}"#, "cfg.json") {
            Err(CliError::Parse { message, .. }) => assert!(message.contains("sed")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_delta_accepts_complex_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json_str(
            r#"{"command": "measure", "m": 2, "l": 2, "n": 1, "t": 2,
                "codebook": "custom", "delta": [[1, [0, 1]], [0, 2]]}"#,
            "inline",
        )
        .unwrap()
        .overridden_by(base(dir.path()));
        let e = cfg.resolve().unwrap();
        assert_eq!(e.pair.column_supports(), &[1, 2]);
        assert!((e.codebook.average_energy() - 2.0).abs() < 1e-12);

        let mut bad = cfg.clone();
        bad.delta = Some(vec![vec![Entry::Real(1.0)]]);
        assert!(matches!(bad.resolve(), Err(CliError::Validation { field: "delta", .. })));
    }

    #[test]
    fn unitary_query_needs_square_block() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            m: Some(3),
            l: Some(2),
            n: Some(2),
            t: Some(2),
            codebook: Some(CodebookName::Example1Pair),
            ..base(dir.path())
        };
        assert!(matches!(cfg.resolve(), Err(CliError::Validation { field: "query", .. })));
        let uniform_only = ExperimentConfig {
            query: Some(QueryKind::Uniform),
            ..cfg
        };
        assert!(uniform_only.resolve().is_ok());
    }

    #[test]
    fn worst_pair_of_uncoded_code_differs_in_one_entry() {
        let book = uncoded_bpsk(2, 2).unwrap();
        let d = worst_pair(&book, 2).unwrap();
        assert_eq!(d.nonzero_rows(), 1);
        assert_eq!(d.nonzero_columns(), 1);
    }

    #[test]
    fn snr_grid_parsing() {
        assert_eq!(parse_snr_grid("0:2:6").unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(parse_snr_grid("10:5:45").unwrap().len(), 8);
        assert_eq!(parse_snr_grid("0:3:7").unwrap(), vec![0.0, 3.0, 6.0]);
        assert_eq!(parse_snr_grid("-5:0.5:-4").unwrap(), vec![-5.0, -4.5, -4.0]);
        for bad in ["0:0:5", "5:1:0", "1:2", "a:1:2", "0:1:inf"] {
            assert!(parse_snr_grid(bad).is_err(), "{bad}");
        }
    }
}
